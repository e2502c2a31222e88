"""Residual channel-denoiser in torch: head conv, 4 residual blocks, tail.

The layer order matches the native engine exactly: head conv + relu, then
per block conv, relu, conv, skip-add, relu, then a linear tail conv.
"""

from __future__ import annotations

import torch
import torch.nn as nn

N_RESIDUAL_BLOCKS = 4


def _pair(kernel) -> tuple[int, int]:
    if isinstance(kernel, int):
        return kernel, kernel
    kh, kw = kernel
    return int(kh), int(kw)


class ResBlock(nn.Module):
    def __init__(self, features: int, kernel):
        super().__init__()
        kh, kw = _pair(kernel)
        pad = (kh // 2, kw // 2)
        self.conv1 = nn.Conv2d(features, features, (kh, kw), padding=pad)
        self.conv2 = nn.Conv2d(features, features, (kh, kw), padding=pad)

    def forward(self, x):
        t = torch.relu(self.conv1(x))
        t = self.conv2(t)
        return torch.relu(t + x)


class Denoiser(nn.Module):
    """Maps packed (2 N_sym, N_p, N_ant) observations to denoised estimates."""

    def __init__(self, n_sym: int, n_ant: int, features: int = 32, kernel=3):
        super().__init__()
        kh, kw = _pair(kernel)
        pad = (kh // 2, kw // 2)
        io_ch = 2 * n_sym
        self.n_sym, self.n_ant = n_sym, n_ant
        self.features, self.kernel = features, (kh, kw)
        self.head = nn.Conv2d(io_ch, features, (kh, kw), padding=pad)
        self.blocks = nn.ModuleList(
            ResBlock(features, (kh, kw)) for _ in range(N_RESIDUAL_BLOCKS)
        )
        self.tail = nn.Conv2d(features, io_ch, (kh, kw), padding=pad)

    def forward(self, x):
        h = torch.relu(self.head(x))
        for block in self.blocks:
            h = block(h)
        return self.tail(h)


def masked_loss(pred: torch.Tensor, truth: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over the pilots with mask 1 only.

    ``mask`` is (batch, n_p); it broadcasts over channels and antennas, so
    gradients with respect to masked-out predictions are exactly zero.
    """
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(truth.shape)}")
    m = mask[:, None, :, None].to(pred.dtype)
    total = m.sum() * pred.shape[1] * pred.shape[3]
    if float(total) == 0.0:
        raise ValueError("mask excludes every pilot")
    return ((pred - truth) ** 2 * m).sum() / total
