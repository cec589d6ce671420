"""Recombine rhythm, pitch, and timbre across utterances.

Loads the checkpoint from demo 03 and runs the full conversion matrix: each
non-empty subset of {rhythm, pitch, timbre} taken from a second utterance
while the rest stays with the source. Also shows the equivalent CLI call and
writes one rough audio preview.

    python3 demos/04_convert.py
"""

import sys
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from factorvc.cli import main as cli_main
from factorvc.converter import convert, encode_utterance, mel_to_audio
from factorvc.model import load_checkpoint

WORK = Path("demo_workspace")


def main():
    ckpt_path = WORK / "run" / "checkpoint.pt"
    if not ckpt_path.exists():
        sys.exit("no checkpoint found; run demos/03_train_overfit.py first")
    ckpt = load_checkpoint(ckpt_path)
    print(f"checkpoint from step {ckpt.step}, speakers {sorted(ckpt.speaker_stats)}")

    src_wav = WORK / "corpus" / "wavs" / "spk0_utt0.wav"
    tgt_wav = WORK / "corpus" / "wavs" / "spk1_utt1.wav"
    source = encode_utterance(src_wav, ckpt.speaker_stats["spk0"], ckpt.feat_cfg)
    target = encode_utterance(tgt_wav, ckpt.speaker_stats["spk1"], ckpt.feat_cfg)
    print(f"source {src_wav.name}: {source.num_frames} frames")
    print(f"target {tgt_wav.name}: {target.num_frames} frames")
    print()

    out_dir = WORK / "converted"
    out_dir.mkdir(exist_ok=True)
    routes = {
        "rhythm": dict(rhythm_target=target),
        "pitch": dict(pitch_target=target),
        "timbre": dict(timbre_speaker="spk1"),
        "rhythm+pitch": dict(rhythm_target=target, pitch_target=target),
        "rhythm+timbre": dict(rhythm_target=target, timbre_speaker="spk1"),
        "pitch+timbre": dict(pitch_target=target, timbre_speaker="spk1"),
        "rhythm+pitch+timbre": dict(
            rhythm_target=target, pitch_target=target, timbre_speaker="spk1"
        ),
    }
    for label, kwargs in routes.items():
        res = convert(ckpt, source, "spk0", **kwargs)
        assert res.conversion_type == label
        np.savez(out_dir / f"api_{label}.npz", mel=res.mel)
        # the output grid always follows whoever supplies the rhythm codes
        print(f"  {label:22s} -> mel {res.mel.shape}")
    print()

    print("same thing through the CLI (timbre only):")
    rc = cli_main([
        "convert",
        "--checkpoint", str(ckpt_path),
        "--source", str(src_wav),
        "--source-speaker", "spk0",
        "--timbre-target", "spk1",
        "--out-dir", str(out_dir),
    ])
    assert rc == 0
    print()

    res = convert(ckpt, source, "spk0", timbre_speaker="spk1")
    wave = mel_to_audio(res.mel, ckpt.feat_cfg, n_iter=30)
    preview = out_dir / "timbre_preview.wav"
    wavfile.write(preview, ckpt.feat_cfg.sample_rate, (wave * 32767).astype(np.int16))
    print(f"rough waveform preview: {preview}")
    print("(a neural vocoder would go here in a production system)")


if __name__ == "__main__":
    main()
