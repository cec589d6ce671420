"""Differentiable building blocks: gradient reversal, mutual-information-free
binary codes via Gumbel-softmax, and the two-layer prediction head used by the
self-prediction adversary.
"""

from __future__ import annotations

import torch
from torch import nn


class _GradReverse(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lambda_scale):
        ctx.lambda_scale = lambda_scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return -ctx.lambda_scale * grad_output, None


def grl_apply(x: torch.Tensor, lambda_scale: float = 1.0) -> torch.Tensor:
    """Identity in the forward pass; backward multiplies the gradient by
    -lambda_scale. lambda_scale = 0 blocks the gradient entirely (exact zeros).
    """
    lambda_scale = float(lambda_scale)
    if lambda_scale < 0:
        raise ValueError("lambda_scale must be >= 0; the reversal supplies the sign")
    return _GradReverse.apply(x, lambda_scale)


class GradientReverser(nn.Module):
    def __init__(self, lambda_scale: float = 1.0):
        super().__init__()
        if lambda_scale < 0:
            raise ValueError("lambda_scale must be >= 0")
        self.lambda_scale = float(lambda_scale)

    def forward(self, x):
        return grl_apply(x, self.lambda_scale)


def mbv_encode(
    logits: torch.Tensor,
    temperature: float = 1.0,
    hard: bool = True,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Per-channel binary codes from (..., dim, 2) logits via Gumbel-softmax.

    Returns (..., dim) values: with hard=True, exact {0, 1} samples whose
    gradient is the straight-through soft relaxation; with hard=False, the
    soft probabilities of the "on" state. Sampling is driven entirely by
    `generator`, so a fixed seed reproduces the draw bit for bit.
    """
    if logits.shape[-1] != 2:
        raise ValueError("logits must have a trailing dimension of 2 (off/on)")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    u = torch.rand(logits.shape, dtype=logits.dtype, device=logits.device, generator=generator)
    u = u.clamp_min(torch.finfo(logits.dtype).tiny)
    gumbel = -torch.log(-torch.log(u))
    y = torch.softmax((logits + gumbel) / temperature, dim=-1)
    soft = y[..., 1]
    if not hard:
        return soft
    hard_on = (y[..., 1] > y[..., 0]).to(logits.dtype)
    # this operand order keeps the result exactly binary in floating point:
    # (h - s) is exact or within half an ulp of 1, and adding s back rounds
    # to h; the (h + s) - s order can lose an ulp
    return hard_on - soft.detach() + soft


class MBVBottleneck(nn.Module):
    """Binary code layer. Training: stochastic straight-through samples.
    Inference: deterministic argmax of the logits, no noise."""

    def __init__(self, dim: int, temperature: float = 1.0):
        super().__init__()
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.temperature = float(temperature)

    def forward(self, logits: torch.Tensor, generator: torch.Generator | None = None):
        if logits.shape[-2] != self.dim:
            raise ValueError(f"expected {self.dim} code channels, got {logits.shape[-2]}")
        if self.training:
            return mbv_encode(logits, self.temperature, hard=True, generator=generator)
        return (logits[..., 1] > logits[..., 0]).to(logits.dtype)


class PredictionHead(nn.Module):
    """fc -> GELU -> LayerNorm -> fc, applied frame-wise."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.act = nn.GELU()
        self.norm = nn.LayerNorm(hidden_dim, eps=1e-5)
        self.fc2 = nn.Linear(hidden_dim, out_dim)

    def forward(self, x):
        return self.fc2(self.norm(self.act(self.fc1(x))))
