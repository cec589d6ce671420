"""Joint training of the autoencoder and the masked self-prediction adversary.

One Adam instance owns every parameter. The reported objective is

    total = alpha * l_adv + beta(step) * l_rec

with alpha fixed and beta decaying stepwise. The encoder side of the
adversarial term is realized by folding alpha into the gradient-reversal
scale: the backward loss is l_adv + beta * l_rec with GRL scale
alpha * grl_lambda. That leaves the adversary's own gradients unscaled (it
keeps learning even at alpha = 0) while the encoders receive exactly the
alpha-weighted reversed gradient.

Every random draw (batch composition, crops, resampling, mask choice, binary
code sampling) comes from two checkpointed generators, so a seeded run is
reproducible bit for bit and resume continues the exact same trajectory.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .adversary import MAPNetwork, adversarial_loss, map_predict, sample_mask
from .dataset import Dataset
from .features import random_resample
from .model import FactorModel, ModelConfig, save_checkpoint

LOSS_HEADER = "step,l_adv,l_rec,beta,total"


@dataclass(frozen=True)
class TrainingConfig:
    alpha: float = 0.1
    beta_initial: float = 1.0
    beta_decay: float = 0.9
    beta_interval_steps: int = 500_000
    grl_lambda: float = 1.0
    learning_rate: float = 1e-4
    batch_size: int = 64
    total_steps: int = 800_000
    seed: int = 0
    adv_reduction: str = "mean"
    segment_min: int = 19
    segment_max: int = 32
    rate_min: float = 0.5
    rate_max: float = 1.5
    max_frames: int = 0  # 0 disables random cropping
    checkpoint_interval: int = 0  # 0 saves only at the end
    val_interval: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.grl_lambda < 0:
            raise ValueError("alpha and grl_lambda must be >= 0")
        if self.beta_initial < 0 or not 0 < self.beta_decay <= 1:
            raise ValueError("beta_initial >= 0 and 0 < beta_decay <= 1 required")
        if self.beta_interval_steps < 1:
            raise ValueError("beta_interval_steps must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be >= 1")
        if self.adv_reduction not in ("mean", "sum"):
            raise ValueError("adv_reduction must be 'mean' or 'sum'")
        if not 1 <= self.segment_min <= self.segment_max:
            raise ValueError("bad resample segment range")
        if not 0 < self.rate_min <= self.rate_max:
            raise ValueError("bad resample rate range")
        if self.max_frames < 0:
            raise ValueError("max_frames must be >= 0")

    @classmethod
    def desk_profile(cls, **overrides) -> "TrainingConfig":
        """Small-corpus settings: batch 8, 5000 steps, beta decay every 2000."""
        base = dict(batch_size=8, total_steps=5000, beta_interval_steps=2000)
        base.update(overrides)
        return cls(**base)


def beta_schedule(step: int, cfg: TrainingConfig) -> float:
    """Stepwise decay: beta_initial * beta_decay ** floor(step / interval)."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return cfg.beta_initial * cfg.beta_decay ** (step // cfg.beta_interval_steps)


def reconstruction_loss(
    target: torch.Tensor, prediction: torch.Tensor, frame_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean squared error over (valid) frames and mel channels."""
    if target.shape != prediction.shape:
        raise ValueError("target and prediction shapes differ")
    sq = (target - prediction) ** 2
    if frame_mask is None:
        return sq.mean()
    sq = sq * frame_mask[..., None].to(sq.dtype)
    denom = frame_mask.sum() * target.shape[-1]
    if denom == 0:
        raise ValueError("no valid frames to average the reconstruction loss over")
    return sq.sum() / denom


def total_loss(l_adv, l_rec, step: int, cfg: TrainingConfig):
    """The reported objective: alpha * l_adv + beta(step) * l_rec."""
    return cfg.alpha * l_adv + beta_schedule(step, cfg) * l_rec


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


class _Batcher:
    """Length-bucketed sampling with rhythm-corrupting input resampling.

    Records are sorted by frame count and split into contiguous buckets of
    about four batches each; a step draws one bucket (weighted by size), then
    a batch inside it, which keeps padding waste small. Content and pitch
    inputs are jointly random-resampled per example (one draw for both, so
    they stay mutually aligned), then refitted to the example's length;
    padding uses the mel log floor and the unvoiced pitch bin, and padded
    frames are masked out of every loss.
    """

    def __init__(self, dataset: Dataset, cfg: TrainingConfig):
        if not dataset.records:
            raise ValueError("dataset has no records")
        self.records = dataset.records
        self.cfg = cfg
        self.mel_pad = float(np.log(dataset.config.magnitude_floor))
        self.pitch_bins = dataset.config.pitch_bins
        order = sorted(range(len(self.records)), key=lambda i: self.records[i].num_frames)
        size = max(cfg.batch_size * 4, cfg.batch_size)
        self.buckets = [order[i : i + size] for i in range(0, len(order), size)]
        counts = np.array([len(b) for b in self.buckets], dtype=np.float64)
        self.bucket_p = counts / counts.sum()

    def _prepare(self, rec, rng):
        mel, onehot = rec.mel, rec.pitch_onehot
        t = mel.shape[0]
        if 0 < self.cfg.max_frames < t:
            start = int(rng.integers(0, t - self.cfg.max_frames + 1))
            mel = mel[start : start + self.cfg.max_frames]
            onehot = onehot[start : start + self.cfg.max_frames]
            t = self.cfg.max_frames
        joint = np.concatenate([mel, onehot], axis=1)
        warped = random_resample(
            joint,
            rng,
            (self.cfg.segment_min, self.cfg.segment_max),
            (self.cfg.rate_min, self.cfg.rate_max),
        )
        if warped.shape[0] >= t:
            warped = warped[:t]
        else:
            pad = np.zeros((t - warped.shape[0], joint.shape[1]))
            pad[:, : mel.shape[1]] = self.mel_pad
            pad[:, mel.shape[1]] = 1.0  # unvoiced pitch bin
            warped = np.concatenate([warped, pad], axis=0)
        return mel, onehot, warped[:, : mel.shape[1]], warped[:, mel.shape[1] :]

    def next_batch(self, rng: np.random.Generator) -> dict:
        bucket = self.buckets[int(rng.choice(len(self.buckets), p=self.bucket_p))]
        replace = len(bucket) < self.cfg.batch_size
        chosen = rng.choice(len(bucket), size=self.cfg.batch_size, replace=replace)
        rows = [self._prepare(self.records[bucket[i]], rng) for i in chosen]
        speakers = [self.records[bucket[i]].speaker_id for i in chosen]

        t_max = max(r[0].shape[0] for r in rows)
        b = len(rows)
        mel = np.full((b, t_max, rows[0][0].shape[1]), self.mel_pad)
        pitch = np.zeros((b, t_max, self.pitch_bins))
        pitch[:, :, 0] = 1.0
        content_in = mel.copy()
        pitch_in = pitch.copy()
        frame_mask = np.zeros((b, t_max))
        for i, (m, oh, cw, pw) in enumerate(rows):
            n = m.shape[0]
            mel[i, :n] = m
            pitch[i, :n] = oh
            content_in[i, :n] = cw
            pitch_in[i, :n] = pw
            frame_mask[i, :n] = 1.0
        return {
            "mel": torch.from_numpy(mel).float(),
            "pitch": torch.from_numpy(pitch).float(),
            "content_input": torch.from_numpy(content_in).float(),
            "pitch_input": torch.from_numpy(pitch_in).float(),
            "frame_mask": torch.from_numpy(frame_mask).float(),
            "speakers": speakers,
        }


# ---------------------------------------------------------------------------
# the training state and step
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    model: FactorModel
    map_net: MAPNetwork
    optimizer: torch.optim.Optimizer
    np_rng: np.random.Generator
    torch_gen: torch.Generator
    cfg: TrainingConfig
    step: int = 0


def init_state(
    model_cfg: ModelConfig, cfg: TrainingConfig, speaker_ids: list[str]
) -> TrainState:
    torch.manual_seed(cfg.seed)
    model = FactorModel(model_cfg, speaker_ids)
    map_net = MAPNetwork(model_cfg.layout.dim)
    params = list(model.parameters()) + list(map_net.parameters())
    opt = torch.optim.Adam(params, lr=cfg.learning_rate)
    return TrainState(
        model=model,
        map_net=map_net,
        optimizer=opt,
        np_rng=np.random.default_rng(cfg.seed),
        torch_gen=torch.Generator().manual_seed(cfg.seed),
        cfg=cfg,
        step=0,
    )


def train_step(state: TrainState, batch: dict) -> dict:
    """One optimizer update over a prepared batch; returns the logged losses.

    Factor masks are drawn per example; examples sharing a factor are scored
    together. Aborts with RuntimeError if any loss goes non-finite, before
    the parameters can be poisoned.
    """
    cfg = state.cfg
    state.model.train()
    state.map_net.train()
    bundle = state.model.encode(
        batch["mel"], batch["content_input"], batch["pitch_input"],
        batch["speakers"], generator=state.torch_gen,
    )
    mel_hat = state.model.decode(bundle.assembled)
    l_rec = reconstruction_loss(batch["mel"], mel_hat, batch["frame_mask"])

    layout = state.model.layout
    factors = [sample_mask(layout, state.np_rng) for _ in batch["speakers"]]
    grl_scale = cfg.alpha * cfg.grl_lambda
    per_example = []
    for mask in {m.factor: m for m in factors}.values():
        idx = [i for i, m in enumerate(factors) if m.factor == mask.factor]
        sub = bundle.assembled[idx]
        fm = batch["frame_mask"][idx]
        pred = map_predict(sub, mask, state.map_net, grl_lambda=grl_scale)
        # the unmasked slice is a fixed regression target; encoders feel the
        # adversary only through the reversed prediction path
        diff = (sub.detach() - pred).abs()[..., mask.channel_slice] * fm[..., None]
        sums = diff.sum(dim=(1, 2))
        if cfg.adv_reduction == "mean":
            sums = sums / (fm.sum(dim=1).clamp_min(1.0) * mask.width)
        per_example.append(sums)
    l_adv = torch.cat(per_example).mean()

    beta = beta_schedule(state.step, cfg)
    backward_total = l_adv + beta * l_rec  # alpha folded into the GRL scale
    reported = float(cfg.alpha) * l_adv.detach() + beta * l_rec.detach()
    if not torch.isfinite(backward_total):
        raise RuntimeError(
            f"non-finite loss at step {state.step}: "
            f"l_adv={l_adv.item()!r} l_rec={l_rec.item()!r}"
        )
    state.optimizer.zero_grad()
    backward_total.backward()
    state.optimizer.step()
    state.step += 1
    return {
        "step": state.step,
        "l_adv": l_adv.item(),
        "l_rec": l_rec.item(),
        "beta": beta,
        "total": reported.item(),
    }


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------


def _format_row(logs: dict) -> str:
    return (
        f"{logs['step']},{logs['l_adv']!r},{logs['l_rec']!r},"
        f"{logs['beta']!r},{logs['total']!r}"
    )


def _eval_reconstruction(model: FactorModel, dataset: Dataset) -> float:
    model.eval()
    total, frames = 0.0, 0
    with torch.no_grad():
        for rec in dataset.records:
            mel = torch.from_numpy(rec.mel).float()[None]
            pitch = torch.from_numpy(rec.pitch_onehot).float()[None]
            out, _ = model(mel, mel, pitch, [rec.speaker_id])
            total += float(((out - mel) ** 2).mean()) * rec.num_frames
            frames += rec.num_frames
    model.train()
    return total / frames


def train(
    dataset: Dataset,
    cfg: TrainingConfig = TrainingConfig(),
    model_cfg: ModelConfig = ModelConfig(),
    out_dir: str | Path = "runs/default",
    resume: str | Path | None = None,
    val_dataset: Dataset | None = None,
) -> Path:
    """Run the loop, stream losses to <out_dir>/losses.csv, return the final
    checkpoint path. `resume` continues a run bit-exactly from a checkpoint
    written by this function (same config expected)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    speakers = dataset.speakers

    if resume is not None:
        payload = torch.load(resume, map_location="cpu", weights_only=False)
        saved_model_cfg = ModelConfig(**payload["model_config"])
        if saved_model_cfg != model_cfg:
            raise ValueError("checkpoint model config disagrees with the requested one")
        state = init_state(model_cfg, cfg, payload["speakers"])
        state.model.load_state_dict(payload["model_state"])
        state.map_net.load_state_dict(payload["map_state"])
        state.optimizer.load_state_dict(payload["optimizer_state"])
        state.np_rng = np.random.default_rng()
        state.np_rng.bit_generator.state = payload["np_rng_state"]
        state.torch_gen.set_state(payload["torch_gen_state"])
        state.step = payload["step"]
    else:
        state = init_state(model_cfg, cfg, speakers)

    batcher = _Batcher(dataset, cfg)
    loss_path = out_dir / "losses.csv"
    fresh = resume is None or not loss_path.exists()
    if not fresh:
        # drop any rows logged after the checkpoint was taken, so the
        # continued file reads as one uninterrupted run
        lines = loss_path.read_text().splitlines()
        kept = [lines[0]] + [
            ln for ln in lines[1:] if ln and int(ln.split(",", 1)[0]) <= state.step
        ]
        loss_path.write_text("\n".join(kept) + "\n")
    val_path = out_dir / "val_losses.csv"
    ckpt_path = out_dir / "checkpoint.pt"

    def _save(step):
        save_checkpoint(
            ckpt_path,
            state.model,
            state.map_net,
            feat_cfg=dataset.config,
            speaker_stats=dataset.speaker_stats,
            step=step,
            optimizer=state.optimizer,
            train_cfg=cfg,
            np_rng_state=state.np_rng.bit_generator.state,
            torch_gen_state=state.torch_gen.get_state(),
        )

    with open(loss_path, "w" if fresh else "a") as log:
        if fresh:
            log.write(LOSS_HEADER + "\n")
        if val_dataset is not None and cfg.val_interval > 0 and fresh:
            val_path.write_text("step,l_rec\n")
        while state.step < cfg.total_steps:
            batch = batcher.next_batch(state.np_rng)
            logs = train_step(state, batch)
            log.write(_format_row(logs) + "\n")
            log.flush()
            if cfg.checkpoint_interval and state.step % cfg.checkpoint_interval == 0:
                _save(state.step)
            if (
                val_dataset is not None
                and cfg.val_interval
                and state.step % cfg.val_interval == 0
            ):
                val_rec = _eval_reconstruction(state.model, val_dataset)
                with open(val_path, "a") as vf:
                    vf.write(f"{state.step},{val_rec!r}\n")
    _save(state.step)
    return ckpt_path


def train_from_config(config_path: str | Path, resume: str | Path | None = None) -> Path:
    """Config-file front end: parse, build the dataset, train."""
    from .config import load_run_config
    from .dataset import build_dataset

    rc = load_run_config(config_path)
    if rc.data is None:
        raise ValueError(f"{config_path}: a [data] section is required to train")
    ds = build_dataset(rc.data.train_manifest, rc.data.cache_dir, rc.features)
    val_ds = None
    if rc.data.val_manifest:
        val_ds = build_dataset(rc.data.val_manifest, rc.data.cache_dir, rc.features)
    return train(ds, rc.training, rc.model, rc.data.out_dir, resume=resume, val_dataset=val_ds)
