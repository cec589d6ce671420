"""The factoring autoencoder.

Three sequence encoders (rhythm, content, pitch) plus a speaker lookup table
produce four codes; the bundle assembles them on a common time axis and a
recurrent decoder maps the bundle back to a mel spectrogram.

Encoder skeleton: a stack of width-5 conv layers with group norm and ReLU,
a bidirectional LSTM, then time downsampling that keeps the forward state at
the end of each group and the backward state at its start. Rhythm additionally
passes through the binary bottleneck, so its code is the only discrete one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .blocks import MBVBottleneck
from .features import FeatureConfig, SpeakerStats

FACTORS = ("rhythm", "content", "pitch", "timbre")


@dataclass(frozen=True)
class ModelConfig:
    mel_bins: int = 80
    pitch_bins: int = 257
    rhythm_conv_layers: int = 1
    rhythm_conv_channels: int = 128
    rhythm_rnn_width: int = 2
    rhythm_dim: int = 2
    mbv_temperature: float = 1.0
    content_conv_layers: int = 3
    content_conv_channels: int = 512
    content_dim: int = 16
    pitch_conv_layers: int = 3
    pitch_conv_channels: int = 256
    pitch_dim: int = 32
    downsample: int = 8
    timbre_dim: int = 16
    decoder_layers: int = 3
    decoder_width: int = 512
    kernel_size: int = 5
    norm_groups_divisor: int = 16

    def __post_init__(self):
        if self.downsample < 1:
            raise ValueError("downsample must be >= 1")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd to keep frame alignment")
        for name in ("content_dim", "pitch_dim", "rhythm_rnn_width"):
            if getattr(self, name) % 2:
                raise ValueError(f"{name} must be even (split across two directions)")
        for name in ("rhythm_conv_channels", "content_conv_channels", "pitch_conv_channels"):
            if getattr(self, name) % self.norm_groups_divisor:
                raise ValueError(f"{name} must be divisible by norm_groups_divisor")

    @property
    def layout(self) -> "BundleLayout":
        return BundleLayout(self.rhythm_dim, self.content_dim, self.pitch_dim, self.timbre_dim)


@dataclass(frozen=True)
class BundleLayout:
    """Channel bookkeeping for the assembled code bundle.

    Order along the channel axis is rhythm | content | pitch | timbre.
    """

    rhythm: int
    content: int
    pitch: int
    timbre: int

    @property
    def dim(self) -> int:
        return self.rhythm + self.content + self.pitch + self.timbre

    def slice_of(self, factor: str) -> slice:
        sizes = [self.rhythm, self.content, self.pitch, self.timbre]
        start = 0
        for name, size in zip(FACTORS, sizes):
            if name == factor:
                return slice(start, start + size)
            start += size
        raise KeyError(f"unknown factor '{factor}'; expected one of {FACTORS}")

    def mask_vector(self, factor: str, keep: bool = False) -> torch.Tensor:
        """Vector of length dim: zeros on the factor's channels, ones elsewhere
        (or the complement with keep=True)."""
        v = torch.ones(self.dim)
        v[self.slice_of(factor)] = 0.0
        return 1.0 - v if keep else v

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _conv_stack(in_dim: int, channels: int, layers: int, kernel: int, groups_div: int):
    mods: list[nn.Module] = []
    d = in_dim
    for _ in range(layers):
        mods.append(nn.Conv1d(d, channels, kernel, padding=kernel // 2))
        mods.append(nn.GroupNorm(channels // groups_div, channels))
        mods.append(nn.ReLU())
        d = channels
    return nn.Sequential(*mods)


def _downsampled_codes(outputs: torch.Tensor, ds: int) -> torch.Tensor:
    """BiLSTM outputs (B, T, 2H) -> codes (B, ceil(T/ds), 2H).

    Forward direction sampled at the last frame of each group, backward at the
    first, so each code summarizes its group from both ends. A ragged tail is
    padded by repeating the final frame before sampling.
    """
    b, t, twoh = outputs.shape
    h = twoh // 2
    pad = (-t) % ds
    if pad:
        outputs = torch.cat([outputs, outputs[:, -1:].expand(b, pad, twoh)], dim=1)
    fwd = outputs[:, ds - 1 :: ds, :h]
    bwd = outputs[:, ::ds, h:]
    return torch.cat([fwd, bwd], dim=-1)


class _SequenceEncoder(nn.Module):
    def __init__(self, in_dim, channels, layers, out_dim, cfg: ModelConfig):
        super().__init__()
        self.convs = _conv_stack(in_dim, channels, layers, cfg.kernel_size, cfg.norm_groups_divisor)
        self.lstm = nn.LSTM(channels, out_dim // 2, batch_first=True, bidirectional=True)
        self.downsample = cfg.downsample

    def forward(self, x):  # (B, T, in_dim) -> (B, ceil(T/ds), out_dim)
        h = self.convs(x.transpose(1, 2)).transpose(1, 2)
        h, _ = self.lstm(h)
        return _downsampled_codes(h, self.downsample)


class RhythmEncoder(nn.Module):
    """Mel in, binary codes out. Sees the raw (non-resampled) mel."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.convs = _conv_stack(
            cfg.mel_bins, cfg.rhythm_conv_channels, cfg.rhythm_conv_layers,
            cfg.kernel_size, cfg.norm_groups_divisor,
        )
        self.lstm = nn.LSTM(
            cfg.rhythm_conv_channels, cfg.rhythm_rnn_width // 2,
            batch_first=True, bidirectional=True,
        )
        self.proj = nn.Linear(cfg.rhythm_rnn_width, 2 * cfg.rhythm_dim)
        self.mbv = MBVBottleneck(cfg.rhythm_dim, cfg.mbv_temperature)
        self.downsample = cfg.downsample
        self.rhythm_dim = cfg.rhythm_dim

    def forward(self, mel, generator: torch.Generator | None = None):
        h = self.convs(mel.transpose(1, 2)).transpose(1, 2)
        h, _ = self.lstm(h)
        codes = _downsampled_codes(h, self.downsample)
        logits = self.proj(codes).view(*codes.shape[:2], self.rhythm_dim, 2)
        return self.mbv(logits, generator=generator)


class SpeakerTable(nn.Module):
    """Trainable timbre embedding per known speaker id."""

    def __init__(self, speaker_ids: list[str], dim: int):
        super().__init__()
        if not speaker_ids:
            raise ValueError("speaker table needs at least one speaker")
        if len(set(speaker_ids)) != len(speaker_ids):
            raise ValueError("duplicate speaker ids")
        self.ids = tuple(speaker_ids)
        self._index = {s: i for i, s in enumerate(self.ids)}
        self.table = nn.Embedding(len(self.ids), dim)

    def index_of(self, speaker_id: str) -> int:
        try:
            return self._index[speaker_id]
        except KeyError:
            raise KeyError(
                f"unknown speaker '{speaker_id}'; table knows {sorted(self.ids)}"
            ) from None

    def forward(self, speaker_ids: list[str]) -> torch.Tensor:
        idx = torch.tensor([self.index_of(s) for s in speaker_ids], dtype=torch.long)
        return self.table(idx)


def assemble_bundle(
    z_r: torch.Tensor,
    z_c: torch.Tensor,
    z_f: torch.Tensor,
    z_u: torch.Tensor,
    out_len: int,
    downsample: int,
) -> torch.Tensor:
    """Upsample codes back to frame rate and concatenate channels.

    Each downsampled code is repeated `downsample` times and truncated to
    out_len; the timbre vector broadcasts across all frames. Channel order is
    rhythm | content | pitch | timbre.
    """

    def up(codes):
        stretched = codes.repeat_interleave(downsample, dim=1)
        if stretched.shape[1] < out_len:
            raise ValueError(
                f"codes cover {stretched.shape[1]} frames, need {out_len}"
            )
        return stretched[:, :out_len]

    r, c, f = up(z_r), up(z_c), up(z_f)
    u = z_u[:, None, :].expand(z_u.shape[0], out_len, z_u.shape[1])
    return torch.cat([r, c, f, u], dim=-1)


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.lstm = nn.LSTM(
            cfg.layout.dim, cfg.decoder_width, num_layers=cfg.decoder_layers,
            batch_first=True, bidirectional=True,
        )
        self.out = nn.Linear(2 * cfg.decoder_width, cfg.mel_bins)

    def forward(self, bundle):
        h, _ = self.lstm(bundle)
        return self.out(h)


@dataclass
class Bundle:
    z_rhythm: torch.Tensor  # (B, T', d_r) binary
    z_content: torch.Tensor  # (B, T', d_c)
    z_pitch: torch.Tensor  # (B, T', d_f)
    z_timbre: torch.Tensor  # (B, d_u)
    assembled: torch.Tensor  # (B, T, D)
    layout: BundleLayout


class FactorModel(nn.Module):
    """Encoders + speaker table + decoder, wired for training and inference."""

    def __init__(self, cfg: ModelConfig, speaker_ids: list[str]):
        super().__init__()
        self.cfg = cfg
        self.rhythm_encoder = RhythmEncoder(cfg)
        self.content_encoder = _SequenceEncoder(
            cfg.mel_bins, cfg.content_conv_channels, cfg.content_conv_layers,
            cfg.content_dim, cfg,
        )
        self.pitch_encoder = _SequenceEncoder(
            cfg.pitch_bins, cfg.pitch_conv_channels, cfg.pitch_conv_layers,
            cfg.pitch_dim, cfg,
        )
        self.speaker_table = SpeakerTable(speaker_ids, cfg.timbre_dim)
        self.decoder = Decoder(cfg)

    @property
    def layout(self) -> BundleLayout:
        return self.cfg.layout

    def encode(
        self,
        mel: torch.Tensor,
        content_input: torch.Tensor,
        pitch_input: torch.Tensor,
        speaker_ids: list[str],
        generator: torch.Generator | None = None,
    ) -> Bundle:
        """mel drives rhythm; content_input / pitch_input may be the randomly
        resampled variants during training. All three must share T."""
        t = mel.shape[1]
        if content_input.shape[1] != t or pitch_input.shape[1] != t:
            raise ValueError("encoder inputs must share the frame axis")
        z_r = self.rhythm_encoder(mel, generator=generator)
        z_c = self.content_encoder(content_input)
        z_f = self.pitch_encoder(pitch_input)
        z_u = self.speaker_table(speaker_ids)
        assembled = assemble_bundle(z_r, z_c, z_f, z_u, t, self.cfg.downsample)
        return Bundle(z_r, z_c, z_f, z_u, assembled, self.layout)

    def decode(self, assembled: torch.Tensor) -> torch.Tensor:
        return self.decoder(assembled)

    def forward(self, mel, content_input, pitch_input, speaker_ids, generator=None):
        bundle = self.encode(mel, content_input, pitch_input, speaker_ids, generator)
        return self.decode(bundle.assembled), bundle


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path,
    model: FactorModel,
    map_net: nn.Module,
    *,
    feat_cfg: FeatureConfig,
    speaker_stats: dict[str, SpeakerStats],
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
    train_cfg=None,
    np_rng_state: dict | None = None,
    torch_gen_state: torch.Tensor | None = None,
) -> None:
    payload = {
        "model_state": model.state_dict(),
        "map_state": map_net.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "model_config": dataclasses.asdict(model.cfg),
        "feature_config": dataclasses.asdict(feat_cfg),
        "train_config": dataclasses.asdict(train_cfg) if train_cfg is not None else None,
        "speakers": list(model.speaker_table.ids),
        "speaker_stats": {
            s: (st.logf0_mean, st.logf0_std) for s, st in speaker_stats.items()
        },
        "layout": model.layout.as_dict(),
        "feature_fingerprint": feat_cfg.fingerprint(),
        "step": int(step),
        "np_rng_state": np_rng_state,
        "torch_gen_state": torch_gen_state,
    }
    torch.save(payload, path)


@dataclass
class Checkpoint:
    model: FactorModel
    map_net: nn.Module
    feat_cfg: FeatureConfig
    speaker_stats: dict[str, SpeakerStats]
    step: int
    payload: dict

    @property
    def layout(self) -> BundleLayout:
        return self.model.layout


def load_checkpoint(path) -> Checkpoint:
    from .adversary import MAPNetwork  # deferred: adversary imports this module

    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = ModelConfig(**payload["model_config"])
    model = FactorModel(cfg, payload["speakers"])
    model.load_state_dict(payload["model_state"])
    map_net = MAPNetwork(cfg.layout.dim)
    map_net.load_state_dict(payload["map_state"])
    feat_cfg = FeatureConfig(**payload["feature_config"])
    if feat_cfg.fingerprint() != payload["feature_fingerprint"]:
        raise ValueError("checkpoint feature fingerprint disagrees with its config")
    stats = {
        s: SpeakerStats(s, m, sd) for s, (m, sd) in payload["speaker_stats"].items()
    }
    ckpt = Checkpoint(model, map_net, feat_cfg, stats, payload["step"], payload)
    model.eval()
    map_net.eval()
    return ckpt
