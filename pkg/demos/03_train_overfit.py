"""Train a small model until it memorizes the demo corpus.

Writes an INI run configuration, trains a few hundred steps on the corpus
from demo 01 (rerun that first if demo_workspace/ is missing), and tails the
loss log. The checkpoint feeds demos 04 and 05.

    python3 demos/03_train_overfit.py

Roughly a minute on one CPU core. The same run also works through the CLI:
factorvc train --config demo_workspace/run.ini
"""

import sys
from pathlib import Path

from factorvc.config import DataConfig, RunConfig, load_run_config, save_run_config
from factorvc.features import FeatureConfig
from factorvc.model import ModelConfig
from factorvc.trainer import TrainingConfig, train_from_config

WORK = Path("demo_workspace")

MODEL = ModelConfig(
    rhythm_conv_channels=32,
    content_conv_channels=64,
    content_conv_layers=2,
    pitch_conv_channels=64,
    pitch_conv_layers=2,
    content_dim=8,
    pitch_dim=8,
    timbre_dim=8,
    decoder_layers=1,
    decoder_width=96,
)


def main():
    manifest = WORK / "corpus" / "manifest.txt"
    if not manifest.exists():
        sys.exit("no demo corpus found; run demos/01_features.py first")

    run = RunConfig(
        features=FeatureConfig(),
        model=MODEL,
        training=TrainingConfig.desk_profile(batch_size=4, total_steps=300, max_frames=64),
        data=DataConfig(
            train_manifest=str(manifest),
            cache_dir=str(WORK / "cache"),
            out_dir=str(WORK / "run"),
        ),
    )
    ini = WORK / "run.ini"
    save_run_config(ini, run)
    print(f"run configuration written to {ini}")
    loaded = load_run_config(ini)
    assert loaded == run  # the INI round-trips exactly

    print("training (a few hundred steps, small model) ...")
    ckpt = train_from_config(ini)
    print(f"checkpoint: {ckpt}")

    rows = (WORK / "run" / "losses.csv").read_text().splitlines()
    print(f"loss log: {len(rows) - 1} rows of '{rows[0]}'")
    for row in rows[1:3] + ["..."] + rows[-2:]:
        print(f"  {row}")
    first, last = float(rows[1].split(",")[2]), float(rows[-1].split(",")[2])
    print(f"reconstruction loss {first:.3f} -> {last:.3f}")
    print("resume later with: factorvc train --config demo_workspace/run.ini "
          "--resume demo_workspace/run/checkpoint.pt")


if __name__ == "__main__":
    main()
