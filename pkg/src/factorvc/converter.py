"""Conversion: recombine factor codes from different utterances and decode.

The rhythm provider dictates timing. Its binary codes fix both the code
count and the output frame count; content and pitch codes computed on a
differently-sized source are linearly interpolated onto the rhythm code
grid. The interpolation copies rows exactly when the grids already match,
so a conversion with no targets reproduces the model's own reconstruction
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio_io import load_audio
from .features import (
    FeatureConfig,
    SpeakerStats,
    extract_f0,
    mel_filterbank,
    mel_spectrogram,
    quantize_pitch,
)
from .model import FACTORS, Checkpoint, assemble_bundle


@dataclass(frozen=True)
class UtteranceInput:
    """Model-ready features for one utterance."""

    mel: np.ndarray  # (T, mel_bins) log-mel
    pitch_onehot: np.ndarray  # (T, pitch_bins)

    def __post_init__(self):
        if self.mel.ndim != 2 or self.pitch_onehot.ndim != 2:
            raise ValueError("mel and pitch_onehot must be 2-D")
        if self.mel.shape[0] != self.pitch_onehot.shape[0]:
            raise ValueError("mel and pitch contour disagree on frame count")

    @property
    def num_frames(self) -> int:
        return self.mel.shape[0]


@dataclass
class ConversionResult:
    mel: np.ndarray  # (T_out, mel_bins) float32 log-mel
    conversion_type: str  # "reconstruction" or '+'-joined replaced factors
    codes: dict[str, np.ndarray]  # per-factor codes on the output grid
    assembled: np.ndarray  # (T_out, bundle_dim) after any ablation


def pooled_stats(stats: dict[str, SpeakerStats]) -> SpeakerStats:
    """Speaker-agnostic normalizer: mean of means, RMS of stds."""
    if not stats:
        raise ValueError("no speaker statistics to pool")
    means = [s.logf0_mean for s in stats.values()]
    stds = [s.logf0_std for s in stats.values()]
    return SpeakerStats(
        "<pooled>",
        float(np.mean(means)),
        float(np.sqrt(np.mean(np.square(stds)))),
    )


def encode_utterance(
    wav_path: str | Path,
    stats: SpeakerStats,
    cfg: FeatureConfig = FeatureConfig(),
) -> UtteranceInput:
    """Waveform file to model-ready features, normalizing pitch with `stats`."""
    wave = load_audio(wav_path, target_sr=cfg.sample_rate)
    mel = mel_spectrogram(wave, cfg)
    f0 = extract_f0(wave, cfg)
    return UtteranceInput(mel=mel, pitch_onehot=quantize_pitch(f0, stats, cfg))


def _interp_codes(codes: torch.Tensor, new_len: int) -> torch.Tensor:
    """Linear interpolation along the code axis, (B, n, d) -> (B, new_len, d).

    Built so that positions landing exactly on a source index copy that row
    bitwise (interpolation weight is exactly zero there); mapping a length
    onto itself is therefore the identity.
    """
    n = codes.shape[1]
    if new_len < 1 or n < 1:
        raise ValueError("need at least one code")
    if n == 1:
        return codes.expand(codes.shape[0], new_len, codes.shape[2]).clone()
    pos = torch.linspace(0.0, float(n - 1), new_len, dtype=torch.float64)
    idx = pos.floor().long()
    nxt = torch.clamp(idx + 1, max=n - 1)
    w = (pos - idx.to(pos.dtype)).to(codes.dtype)[None, :, None]
    a = codes[:, idx]
    b = codes[:, nxt]
    return a + w * (b - a)


def conversion_type(
    rhythm: bool, pitch: bool, timbre: bool, ablate: tuple[str, ...] = ()
) -> str:
    parts = [
        name
        for name, used in (("rhythm", rhythm), ("pitch", pitch), ("timbre", timbre))
        if used
    ]
    label = "+".join(parts) if parts else "reconstruction"
    if ablate:
        label += " (ablated: " + ",".join(ablate) + ")"
    return label


def convert(
    ckpt: Checkpoint,
    source: UtteranceInput,
    source_speaker: str,
    *,
    rhythm_target: UtteranceInput | None = None,
    pitch_target: UtteranceInput | None = None,
    timbre_speaker: str | None = None,
    ablate: tuple[str, ...] = (),
) -> ConversionResult:
    """Decode a recombination of factor codes.

    Any target left as None keeps the source's own codes; passing all three
    swaps rhythm, pitch, and timbre at once. `ablate` zeroes the named factor
    channels in the assembled bundle before decoding.
    """
    for factor in ablate:
        if factor not in FACTORS:
            raise ValueError(f"unknown factor {factor!r}; choose from {FACTORS}")
    if timbre_speaker is not None:
        ckpt.model.speaker_table.index_of(timbre_speaker)  # fail early, by name
    model = ckpt.model
    model.eval()
    with torch.no_grad():
        rhythm_src = rhythm_target if rhythm_target is not None else source
        t_out = rhythm_src.num_frames
        mel_r = torch.from_numpy(rhythm_src.mel).float()[None]
        mel_s = torch.from_numpy(source.mel).float()[None]
        pitch_src = pitch_target if pitch_target is not None else source
        onehot = torch.from_numpy(pitch_src.pitch_onehot).float()[None]

        z_r = model.rhythm_encoder(mel_r)
        z_c = _interp_codes(model.content_encoder(mel_s), z_r.shape[1])
        z_f = _interp_codes(model.pitch_encoder(onehot), z_r.shape[1])
        z_u = model.speaker_table([timbre_speaker or source_speaker])

        assembled = assemble_bundle(z_r, z_c, z_f, z_u, t_out, model.cfg.downsample)
        for factor in ablate:
            assembled[..., model.layout.slice_of(factor)] = 0.0
        mel_hat = model.decode(assembled)

    codes = {
        "rhythm": z_r[0].numpy().copy(),
        "content": z_c[0].numpy().copy(),
        "pitch": z_f[0].numpy().copy(),
        "timbre": z_u[0].numpy().copy(),
    }
    return ConversionResult(
        mel=mel_hat[0].numpy().copy(),
        conversion_type=conversion_type(
            rhythm_target is not None, pitch_target is not None,
            timbre_speaker is not None, ablate,
        ),
        codes=codes,
        assembled=assembled[0].numpy().copy(),
    )


# ---------------------------------------------------------------------------
# waveform preview
# ---------------------------------------------------------------------------


def _stft_mag_to_frames(spec: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    from scipy.signal import get_window

    window = get_window("hann", cfg.frame_length, fftbins=True)
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, : cfg.frame_length]
    return frames * window


def _overlap_add(frames: np.ndarray, cfg: FeatureConfig, out_len: int) -> np.ndarray:
    from scipy.signal import get_window

    window = get_window("hann", cfg.frame_length, fftbins=True)
    pad = (cfg.frame_length - cfg.hop_length) // 2
    total = (frames.shape[0] - 1) * cfg.hop_length + cfg.frame_length
    buf = np.zeros(total)
    wsum = np.zeros(total)
    for k in range(frames.shape[0]):
        start = k * cfg.hop_length
        buf[start : start + cfg.frame_length] += frames[k]
        wsum[start : start + cfg.frame_length] += window**2
    buf /= np.maximum(wsum, 1e-10)
    return buf[pad : pad + out_len]


def _forward_stft(wave: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    from scipy.signal import get_window

    from .features import _frame_signal

    window = get_window("hann", cfg.frame_length, fftbins=True)
    frames = _frame_signal(wave, cfg)
    return np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)


def mel_to_audio(
    log_mel: np.ndarray,
    cfg: FeatureConfig = FeatureConfig(),
    n_iter: int = 60,
    seed: int = 0,
) -> np.ndarray:
    """Rough waveform preview of a log-mel matrix.

    Frame magnitudes come from a non-negative least-squares solve against the
    analysis filterbank, then iterative phase refinement re-estimates the
    phases under the same framing the features used. Quality is preview
    grade by design; the model's output is the mel matrix itself.
    """
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if log_mel.ndim != 2 or log_mel.shape[1] != cfg.mel_bins:
        raise ValueError(f"expected (T, {cfg.mel_bins}) log-mel input")
    if log_mel.shape[0] * cfg.hop_length < cfg.frame_length:
        raise ValueError("too few frames to synthesize even one analysis window")
    from scipy.optimize import nnls

    fb = mel_filterbank(cfg)  # (mel_bins, fft_bins)
    target = np.exp(log_mel)  # linear filterbank magnitudes
    mag = np.zeros((log_mel.shape[0], fb.shape[1]))
    for t in range(log_mel.shape[0]):
        mag[t], _ = nnls(fb, target[t])

    out_len = log_mel.shape[0] * cfg.hop_length
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    wave = np.zeros(out_len)
    for _ in range(n_iter):
        wave = _overlap_add(_stft_mag_to_frames(mag * phase, cfg), cfg, out_len)
        spec = _forward_stft(wave, cfg)
        phase = np.exp(1j * np.angle(spec))
    peak = np.abs(wave).max()
    if peak > 0:
        wave = wave * (0.9 / peak)
    return wave
