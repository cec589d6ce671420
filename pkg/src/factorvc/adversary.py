"""Masked self-prediction adversary.

Per training example one of the four factors is masked out of the assembled
bundle; a stack of prediction heads behind a gradient-reversal layer tries to
predict the missing slice from the remaining channels. The encoders, seeing
the reversed gradient, learn codes from which the masked factor cannot be
recovered, which is what pushes each factor into its own stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .blocks import PredictionHead, grl_apply
from .model import FACTORS, BundleLayout


@dataclass(frozen=True)
class FactorMask:
    """One factor's complement mask over bundle channels.

    vector() is 1 everywhere except the masked factor's channel slice, so
    masked_input = bundle * vector() removes exactly that factor.
    """

    factor: str
    channel_slice: slice
    dim: int

    def vector(self, dtype=torch.float32) -> torch.Tensor:
        v = torch.ones(self.dim, dtype=dtype)
        v[self.channel_slice] = 0.0
        return v

    @property
    def width(self) -> int:
        return self.channel_slice.stop - self.channel_slice.start


def mask_for(layout: BundleLayout, factor: str) -> FactorMask:
    return FactorMask(factor, layout.slice_of(factor), layout.dim)


def all_masks(layout: BundleLayout) -> list[FactorMask]:
    return [mask_for(layout, f) for f in FACTORS]


def sample_mask(layout: BundleLayout, rng: np.random.Generator) -> FactorMask:
    """Uniform draw over the four factor masks."""
    return mask_for(layout, FACTORS[int(rng.integers(len(FACTORS)))])


class MAPNetwork(nn.Module):
    """Stack of prediction heads (fc-GELU-LayerNorm-fc) over bundle channels."""

    def __init__(self, dim: int, num_heads: int = 3, hidden_mult: int = 4):
        super().__init__()
        if num_heads < 1:
            raise ValueError("need at least one head")
        self.heads = nn.ModuleList(
            PredictionHead(dim, hidden_mult * dim, dim) for _ in range(num_heads)
        )

    def forward(self, x):
        for head in self.heads:
            x = head(x)
        return x


def map_predict(
    assembled: torch.Tensor,
    mask: FactorMask,
    net: MAPNetwork,
    grl_lambda: float = 1.0,
) -> torch.Tensor:
    """Prediction of the full bundle from the masked bundle.

    The gradient-reversal sits between the mask and the net, so the net's own
    parameters learn to predict while everything upstream of the bundle is
    pushed the opposite way.
    """
    masked = assembled * mask.vector(assembled.dtype).to(assembled.device)
    return net(grl_apply(masked, grl_lambda))


def adversarial_loss(
    assembled: torch.Tensor,
    prediction: torch.Tensor,
    mask: FactorMask,
    frame_mask: torch.Tensor | None = None,
    reduction: str = "mean",
) -> torch.Tensor:
    """L1 distance between bundle and prediction on the masked slice only.

    `reduction="mean"` averages over the masked slice's elements (and, with a
    frame_mask, only over valid frames); `"sum"` returns the plain L1 norm.
    Channels outside the masked slice never contribute.
    """
    if assembled.shape != prediction.shape:
        raise ValueError("bundle and prediction shapes differ")
    if reduction not in ("mean", "sum"):
        raise ValueError("reduction must be 'mean' or 'sum'")
    diff = (assembled - prediction)[..., mask.channel_slice].abs()
    if frame_mask is not None:
        diff = diff * frame_mask[..., None].to(diff.dtype)
        denom = frame_mask.sum() * mask.width
    else:
        denom = diff.numel()
    total = diff.sum()
    if reduction == "sum":
        return total
    if denom == 0:
        raise ValueError("no valid elements to average the adversarial loss over")
    return total / denom
