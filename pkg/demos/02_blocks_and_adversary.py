"""The two building blocks that make the factorization work.

First the gradient reversal layer: identity forward, sign-flipped and scaled
backward. Then the binary bottleneck and the masked self-prediction adversary
that tries to reconstruct a hidden factor from the others.

    python3 demos/02_blocks_and_adversary.py
"""

import numpy as np
import torch

from factorvc.adversary import MAPNetwork, adversarial_loss, all_masks, map_predict
from factorvc.blocks import grl_apply, mbv_encode
from factorvc.model import BundleLayout


def show_gradient_reversal():
    x = torch.randn(3, requires_grad=True)
    w = torch.randn(3)

    (plain,) = torch.autograd.grad((x * w).sum(), x)
    (reversed_,) = torch.autograd.grad((grl_apply(x, 0.5) * w).sum(), x)
    print("gradient reversal (scale 0.5):")
    print(f"  plain grad    {plain.numpy()}")
    print(f"  reversed grad {reversed_.numpy()}")
    print(f"  ratio         {(reversed_ / plain).numpy()}  (expect -0.5)")
    print()


def show_binary_codes():
    gen = torch.Generator().manual_seed(0)
    logits = torch.randn(4, 6, 2, generator=gen)
    hard = mbv_encode(logits, hard=True, generator=gen)
    print("binary bottleneck samples (training mode, straight-through):")
    print(hard.numpy().astype(int))
    # inference takes the argmax instead, no sampling involved
    det = (logits[..., 1] > logits[..., 0]).float()
    agree = float((hard == det).float().mean())
    print(f"agreement with the deterministic readout: {agree:.2f}")
    print()


def show_adversary():
    layout = BundleLayout(rhythm=2, content=4, pitch=4, timbre=3)
    net = MAPNetwork(layout.dim)
    bundle = torch.randn(1, 10, layout.dim)

    print(f"bundle layout: {layout} (dim {layout.dim})")
    print("per-factor masked self-prediction loss on a random bundle:")
    for mask in all_masks(layout):
        pred = map_predict(bundle, mask, net, grl_lambda=1.0)
        loss = adversarial_loss(bundle, pred, mask)
        print(f"  hide {mask.factor:7s} -> L1 on its {mask.width} channels: {loss.item():.4f}")

    # the loss only ever sees the hidden slice: rewriting the visible
    # channels of the target changes nothing
    mask = all_masks(layout)[1]
    pred = map_predict(bundle, mask, net, grl_lambda=1.0)
    before = adversarial_loss(bundle, pred, mask).item()
    noisy = bundle.clone()
    keep = np.ones(layout.dim, bool)
    keep[mask.channel_slice] = False
    noisy[..., torch.from_numpy(keep)] += 100.0
    after = adversarial_loss(noisy, pred, mask).item()
    print(f"loss before/after perturbing the visible channels: {before:.6f} / {after:.6f}")


def main():
    torch.manual_seed(1)
    show_gradient_reversal()
    show_binary_codes()
    show_adversary()


if __name__ == "__main__":
    main()
