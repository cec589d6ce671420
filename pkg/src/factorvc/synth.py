"""Synthetic vowel-like test signals.

Pulse-train excitation with per-syllable pitch movement, shaped by cascaded
formant resonators, separated by near-silent gaps. Nothing here tries to
sound natural; the point is deterministic material with a controllable F0
register and speaker-dependent spectral envelope, so the pipeline can be
exercised end to end without shipping audio data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

VOWELS = {
    "a": (730.0, 1090.0),
    "e": (530.0, 1840.0),
    "i": (270.0, 2290.0),
    "o": (570.0, 840.0),
    "u": (300.0, 870.0),
}


def _resonator(freq: float, bandwidth: float, sr: int):
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2.0 * np.pi * freq / sr
    b = [(1.0 - r) * np.sqrt(1.0 - 2.0 * r * np.cos(2 * theta) + r * r)]
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return b, a


def synth_utterance(
    rng: np.random.Generator,
    f0_base: float,
    duration_s: float = 2.0,
    sr: int = 16000,
    formant_scale: float = 1.0,
) -> tuple[np.ndarray, str]:
    """One utterance as (waveform float64 in [-1, 1], transcript of vowels)."""
    total = int(duration_s * sr)
    out = np.zeros(total)
    names = []
    t = int(0.04 * sr)
    while t < total - int(0.25 * sr):
        name = list(VOWELS)[int(rng.integers(len(VOWELS)))]
        names.append(name)
        dur = int(rng.uniform(0.22, 0.38) * sr)
        dur = min(dur, total - t - int(0.02 * sr))

        # pitch: per-syllable offset, slow declination, mild vibrato
        offset = rng.uniform(-2.0, 2.0)
        tt = np.arange(dur) / sr
        semis = offset - 2.0 * (tt / (dur / sr)) + 0.35 * np.sin(2 * np.pi * 5.0 * tt)
        f0 = f0_base * 2.0 ** (semis / 12.0)
        phase = np.cumsum(f0 / sr)
        excitation = 2.0 * (phase % 1.0) - 1.0  # sawtooth, rich in harmonics

        f1, f2 = VOWELS[name]
        voiced = excitation
        for freq, bw in ((f1 * formant_scale, 90.0), (f2 * formant_scale, 120.0)):
            b, a = _resonator(freq, bw, sr)
            voiced = lfilter(b, a, voiced)
        ramp = min(dur // 4, int(0.03 * sr))
        env = np.ones(dur)
        env[:ramp] = np.linspace(0.0, 1.0, ramp)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
        out[t : t + dur] += voiced * env

        t += dur + int(rng.uniform(0.05, 0.12) * sr)

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.3 / peak
    return out, " ".join(names)


def build_demo_corpus(
    root: str | Path,
    n_speakers: int = 2,
    utts_per_speaker: int = 5,
    duration_s: float = 2.0,
    seed: int = 0,
    sr: int = 16000,
) -> Path:
    """Write a small WAV corpus plus manifest; returns the manifest path.

    Speakers alternate between a low and a high pitch register and get
    slightly different formant scalings, which is enough separation for the
    desk-scale experiments to have something to disentangle.
    """
    root = Path(root)
    (root / "wavs").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for s in range(n_speakers):
        f0_base = 110.0 * (1.9 ** (s % 2)) * (1.0 + 0.05 * (s // 2))
        fscale = 1.0 + 0.08 * (s % 2) + 0.03 * (s // 2)
        for u in range(utts_per_speaker):
            wave, text = synth_utterance(rng, f0_base, duration_s, sr, fscale)
            rel = f"wavs/spk{s}_utt{u}.wav"
            wavfile.write(root / rel, sr, (wave * 32767).astype(np.int16))
            lines.append(f"{rel}|spk{s}|{text}")
    manifest = root / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest
