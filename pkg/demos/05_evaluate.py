"""Score conversions: mel-cepstral distortion, word error rate, similarity.

Builds a pair manifest over the outputs of demo 04, runs the evaluator, and
prints the metrics CSV plus a similarity report from the built-in
mel-statistics embedder (a deterministic stand-in for a real speaker
verifier, useful for plumbing but not for claims).

    python3 demos/05_evaluate.py
"""

import sys
from pathlib import Path

from factorvc.cli import main as cli_main
from factorvc.evaluator import mcd, wer
from factorvc.dataset import load_mel
from factorvc.features import FeatureConfig, mel_spectrogram
from factorvc.audio_io import load_audio

WORK = Path("demo_workspace")


def main():
    conv_dir = WORK / "converted"
    if not list(conv_dir.glob("api_*.npz")):
        sys.exit("no conversions found; run demos/04_convert.py first")

    # hand computation first: distortion of the timbre conversion against
    # both endpoints. Close to the source in content, it should not land on
    # a zero distortion for either side.
    cfg = FeatureConfig()
    converted = load_mel(conv_dir / "api_timbre.npz")
    src = mel_spectrogram(load_audio(WORK / "corpus/wavs/spk0_utt0.wav", cfg.sample_rate), cfg)
    tgt = mel_spectrogram(load_audio(WORK / "corpus/wavs/spk1_utt1.wav", cfg.sample_rate), cfg)
    print(f"MCD(converted, source) = {mcd(src, converted):6.3f} dB")
    print(f"MCD(converted, target) = {mcd(tgt, converted):6.3f} dB")
    print(f"WER('go do re', 'go la re') = {wer('go do re', 'go la re'):.1f}%")
    print()

    pairs = WORK / "pairs.txt"
    lines = [
        f"corpus/wavs/spk0_utt0.wav|converted/api_{label}.npz"
        for label in ("rhythm", "pitch", "timbre", "rhythm+pitch+timbre")
    ]
    # transcripts are optional; with them the CSV gains a WER column
    lines.append("corpus/wavs/spk0_utt0.wav|corpus/wavs/spk0_utt0.wav|go do re|go do re")
    pairs.write_text("\n".join(lines) + "\n")
    print(f"pair manifest: {pairs}")

    rc = cli_main([
        "evaluate",
        "--pairs", str(pairs),
        "--out", str(WORK / "metrics.csv"),
        "--embeddings-out", str(WORK / "embeddings.txt"),
        "--similarity-out", str(WORK / "similarity.txt"),
    ])
    assert rc == 0
    print()
    print("metrics.csv:")
    print((WORK / "metrics.csv").read_text().strip())
    print()
    print("similarity report:")
    print((WORK / "similarity.txt").read_text().strip())


if __name__ == "__main__":
    main()
