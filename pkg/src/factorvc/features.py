"""Acoustic feature extraction.

Log-mel spectrograms, YIN-style F0 tracking aligned to the mel frames,
per-speaker pitch quantization into one-hot bins, and the random segment
resampling used to corrupt rhythm in encoder inputs during training.
Everything in this module is numpy; tensors appear only further up the stack.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end settings. Defaults give 80 frames per second at 16 kHz."""

    sample_rate: int = 16000
    frame_ms: float = 50.0
    hop_ms: float = 12.5
    fft_size: int = 1024
    mel_bins: int = 80
    fmin_hz: float = 125.0
    fmax_hz: float = 7600.0
    magnitude_floor: float = 0.01
    pitch_fmin_hz: float = 71.0
    pitch_fmax_hz: float = 800.0
    pitch_bins: int = 257
    pitch_clip_sigma: float = 3.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not 0 < self.fmin_hz < self.fmax_hz <= self.sample_rate / 2:
            raise ValueError("need 0 < fmin < fmax <= Nyquist")
        if self.magnitude_floor <= 0:
            raise ValueError("magnitude_floor must be positive")
        if self.fft_size < self.frame_length:
            raise ValueError("fft_size shorter than the analysis frame")
        if not 0 < self.pitch_fmin_hz < self.pitch_fmax_hz:
            raise ValueError("bad pitch search range")
        if self.pitch_bins < 2:
            raise ValueError("pitch_bins must leave room for the unvoiced bin")

    @property
    def frame_length(self) -> int:
        return round(self.sample_rate * self.frame_ms / 1000.0)

    @property
    def hop_length(self) -> int:
        return round(self.sample_rate * self.hop_ms / 1000.0)

    def fingerprint(self) -> str:
        """Stable digest of every field; keys feature caches."""
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SpeakerStats:
    """Per-speaker log-F0 statistics over voiced frames."""

    speaker_id: str
    logf0_mean: float
    logf0_std: float

    def __post_init__(self):
        if not math.isfinite(self.logf0_mean) or not math.isfinite(self.logf0_std):
            raise ValueError(f"non-finite pitch stats for {self.speaker_id}")
        if self.logf0_std <= 0:
            raise ValueError(f"speaker {self.speaker_id}: log-F0 std must be positive")


# ---------------------------------------------------------------------------
# framing and mel
# ---------------------------------------------------------------------------


def _frame_signal(wave: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Center-padded framing: T = floor(len / hop), frames start at k * hop."""
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise ValueError("expected mono waveform")
    frame, hop = cfg.frame_length, cfg.hop_length
    if len(wave) < frame:
        raise ValueError(f"waveform shorter than one frame ({len(wave)} < {frame})")
    pad = (frame - hop) // 2
    padded = np.pad(wave, pad, mode="reflect")
    n_frames = len(wave) // hop
    view = np.lib.stride_tricks.sliding_window_view(padded, frame)[::hop]
    return view[:n_frames]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """Triangular filters (peak 1) on a mel-spaced grid, (mel_bins, fft//2+1)."""
    n_bins = cfg.fft_size // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    mel_pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.mel_bins + 2)
    hz_pts = mel_to_hz(mel_pts)
    fb = np.zeros((cfg.mel_bins, n_bins))
    for m in range(cfg.mel_bins):
        lo, mid, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / (mid - lo)
        down = (hi - fft_freqs) / (hi - mid)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_spectrogram(wave: np.ndarray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Log-mel spectrogram, shape (T, mel_bins), natural log of floored energy.

    Magnitude STFT with a periodic Hann window, triangular mel filterbank,
    then clip at cfg.magnitude_floor and take log. Every output entry is
    therefore >= log(magnitude_floor); pure silence hits that bound exactly.
    """
    frames = _frame_signal(wave, cfg)
    window = get_window("hann", cfg.frame_length, fftbins=True)
    spec = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1))
    mel = spec @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.magnitude_floor))


# ---------------------------------------------------------------------------
# F0 tracking (YIN family)
# ---------------------------------------------------------------------------


def extract_f0(
    wave: np.ndarray,
    cfg: FeatureConfig = FeatureConfig(),
    threshold: float = 0.15,
    silence_rms: float = 1e-4,
) -> np.ndarray:
    """Frame-aligned F0 contour in Hz; 0.0 marks unvoiced frames.

    Cumulative-mean-normalized difference function per frame (YIN), absolute
    threshold with parabolic refinement of the dip. Frames are the same ones
    the mel transform sees, so len(f0) == mel T for the same waveform.
    """
    frames = _frame_signal(wave, cfg)
    n_frames, frame = frames.shape
    tau_min = max(2, int(cfg.sample_rate / cfg.pitch_fmax_hz))
    tau_max = int(cfg.sample_rate / cfg.pitch_fmin_hz)
    if tau_max + tau_min >= frame:
        raise ValueError("pitch_fmin too low for the analysis frame length")
    w = frame - tau_max  # integration window

    # d(tau) = sum_{j<w} (x[j] - x[j+tau])^2, evaluated for all frames at once:
    # power terms from cumulative sums, cross terms from FFT correlation.
    nfft = 1 << (frame + tau_max).bit_length()
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    p0 = sq[:, w]
    taus = np.arange(tau_max + 1)
    p_tau = sq[:, taus + w] - sq[:, taus]
    head = np.zeros_like(frames)
    head[:, :w] = frames[:, :w]
    spec_full = np.fft.rfft(frames, n=nfft, axis=1)
    spec_head = np.fft.rfft(head, n=nfft, axis=1)
    cross = np.fft.irfft(np.conj(spec_head) * spec_full, n=nfft, axis=1)[:, : tau_max + 1]
    diff = np.maximum(p0[:, None] + p_tau - 2.0 * cross, 0.0)

    # cumulative mean normalization; d'(0) = 1 by definition
    cums = np.cumsum(diff[:, 1:], axis=1)
    cmndf = np.ones_like(diff)
    with np.errstate(invalid="ignore", divide="ignore"):
        cmndf[:, 1:] = diff[:, 1:] * taus[1:] / np.where(cums > 0, cums, np.inf)

    rms = np.sqrt(np.mean(frames**2, axis=1))
    f0 = np.zeros(n_frames)
    for i in range(n_frames):
        if rms[i] < silence_rms:
            continue
        row = cmndf[i]
        below = np.nonzero(row[tau_min : tau_max + 1] < threshold)[0]
        if below.size == 0:
            continue
        tau = below[0] + tau_min
        # walk down to the bottom of this dip before interpolating
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        if tau_min < tau < tau_max:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom = a - 2.0 * b + c
            shift = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
            tau_hat = tau + np.clip(shift, -1.0, 1.0)
        else:
            tau_hat = float(tau)
        f0[i] = cfg.sample_rate / tau_hat
    return f0


# ---------------------------------------------------------------------------
# pitch quantization
# ---------------------------------------------------------------------------


def quantize_pitch(
    f0: np.ndarray, stats: SpeakerStats, cfg: FeatureConfig = FeatureConfig()
) -> np.ndarray:
    """One-hot pitch matrix (T, pitch_bins); bin 0 is unvoiced.

    Voiced frames are z-normalized in the log domain with the speaker's own
    statistics, clipped to +/- pitch_clip_sigma, then mapped linearly onto
    bins 1..pitch_bins-1 with round-half-even. z = 0 lands on the middle bin
    (129 with the default 257).
    """
    f0 = np.asarray(f0, dtype=np.float64)
    if f0.ndim != 1:
        raise ValueError("expected a 1-D contour")
    if np.any(f0 < 0):
        raise ValueError("negative F0 in contour; 0 marks unvoiced")
    voiced = f0 > 0
    n_levels = cfg.pitch_bins - 1
    sigma = cfg.pitch_clip_sigma
    bins = np.zeros(len(f0), dtype=np.int64)
    if voiced.any():
        z = (np.log(f0[voiced]) - stats.logf0_mean) / stats.logf0_std
        z = np.clip(z, -sigma, sigma)
        bins[voiced] = 1 + np.rint((z + sigma) / (2 * sigma) * (n_levels - 1)).astype(np.int64)
    onehot = np.zeros((len(f0), cfg.pitch_bins))
    onehot[np.arange(len(f0)), bins] = 1.0
    return onehot


def speaker_stats_from_contours(
    speaker_id: str, contours: list[np.ndarray], min_voiced: int = 2
) -> SpeakerStats:
    """Pool voiced frames across a speaker's utterances into log-F0 stats."""
    voiced = np.concatenate([c[c > 0] for c in contours]) if contours else np.array([])
    if voiced.size < min_voiced:
        raise ValueError(
            f"speaker {speaker_id}: only {voiced.size} voiced frames, need {min_voiced}"
        )
    logs = np.log(voiced)
    std = float(np.std(logs))
    if std <= 0:
        raise ValueError(f"speaker {speaker_id}: degenerate (constant) pitch distribution")
    return SpeakerStats(speaker_id, float(np.mean(logs)), std)


# ---------------------------------------------------------------------------
# random segment resampling
# ---------------------------------------------------------------------------


def random_resample(
    seq: np.ndarray,
    rng: np.random.Generator,
    segment_range: tuple[int, int] = (19, 32),
    rate_range: tuple[float, float] = (0.5, 1.5),
) -> np.ndarray:
    """Divide seq (T, D) into random segments and stretch each in time.

    Segment lengths are uniform integers over segment_range (inclusive); the
    trailing segment is whatever remains. Each segment gets an independent
    rate from rate_range and is linearly interpolated to
    max(1, round(len * rate)) frames. Rate 1 reproduces a segment exactly, and
    interpolation is computed as a + w*(b - a) so per-channel bounds are
    preserved to the last ulp. Output length therefore varies around T.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("expected a nonempty (T, D) array")
    lo, hi = segment_range
    if not 1 <= lo <= hi:
        raise ValueError("bad segment_range")
    r_lo, r_hi = rate_range
    if not 0 < r_lo <= r_hi:
        raise ValueError("bad rate_range")

    t = seq.shape[0]
    pieces = []
    start = 0
    while start < t:
        seg_len = min(int(rng.integers(lo, hi + 1)), t - start)
        rate = float(rng.uniform(r_lo, r_hi))
        seg = seq[start : start + seg_len]
        new_len = max(1, round(seg_len * rate))
        pos = np.linspace(0.0, seg_len - 1.0, new_len)
        idx = pos.astype(np.int64)  # floor; integer positions get w == 0 exactly
        nxt = np.minimum(idx + 1, seg_len - 1)
        w = (pos - idx)[:, None]
        a = seg[idx]
        b = seg[nxt]
        pieces.append(a + w * (b - a))
        start += seg_len
    return np.concatenate(pieces, axis=0)
