"""Feature extraction walkthrough.

Synthesizes a tiny two-speaker corpus, runs the mel / F0 pipeline over one
utterance by hand, then builds the cached dataset the trainer consumes.
Artifacts land in demo_workspace/ under the current directory; later demos
reuse them. Run from the repository root:

    python3 demos/01_features.py
"""

from pathlib import Path

import numpy as np

from factorvc.audio_io import load_audio
from factorvc.dataset import build_dataset
from factorvc.features import FeatureConfig, extract_f0, mel_spectrogram, quantize_pitch
from factorvc.synth import build_demo_corpus

WORK = Path("demo_workspace")


def main():
    manifest = build_demo_corpus(
        WORK / "corpus", n_speakers=2, utts_per_speaker=3, duration_s=1.2, seed=7
    )
    print(f"wrote corpus under {manifest.parent}")
    print(manifest.read_text().strip())
    print()

    cfg = FeatureConfig()
    wav = WORK / "corpus" / "wavs" / "spk0_utt0.wav"
    wave = load_audio(wav, cfg.sample_rate)
    print(f"{wav.name}: {wave.shape[0]} samples at {cfg.sample_rate} Hz")

    mel = mel_spectrogram(wave, cfg)
    print(f"log-mel: {mel.shape} (frames x bins), range [{mel.min():.2f}, {mel.max():.2f}]")

    f0 = extract_f0(wave, cfg)
    voiced = f0[f0 > 0]
    print(
        f"F0: {f0.shape[0]} frames, {voiced.size} voiced, "
        f"median {np.median(voiced):.1f} Hz"
    )

    # the one-hot pitch matrix normalizes per speaker, so stats come from the
    # full dataset pass below; here a quick single-utterance stand-in
    dataset = build_dataset(manifest, WORK / "cache", cfg)
    stats = dataset.speaker_stats["spk0"]
    onehot = quantize_pitch(f0, stats, cfg)
    print(f"pitch one-hot: {onehot.shape}, unvoiced frames use bin 0")
    print(f"active bins this utterance: {np.unique(onehot.argmax(axis=1)).size}")
    print()

    print(f"dataset: {len(dataset)} utterances, speakers {dataset.speakers}")
    for spk in dataset.speakers:
        st = dataset.speaker_stats[spk]
        print(f"  {spk}: log-F0 mean {st.logf0_mean:.3f}, std {st.logf0_std:.3f}")
    print(f"feature cache in {WORK / 'cache'} (a rerun recomputes nothing)")


if __name__ == "__main__":
    main()
