"""Convolutional real/fake classifier for super-resolved band patches.

Three conv -> LeakyReLU -> BatchNorm blocks (64/128/128 filters, 3x3 kernels,
strides 2/2/1) followed by one dense layer and a sigmoid. The input is only
the SR or ground-truth band stack, never the HR guidance. The dense layer
ties the network to a fixed patch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeMismatch


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Block widths, strides and the locked patch geometry."""

    input_bands: int = 6
    patch_size: int = 32
    filters: tuple[int, ...] = (64, 128, 128)
    strides: tuple[int, ...] = (2, 2, 1)
    kernel: int = 3
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "strides", tuple(self.strides))
        if len(self.filters) != len(self.strides) or not self.filters:
            raise ValueError(
                f"filters and strides must be equal-length and non-empty, "
                f"got {len(self.filters)} and {len(self.strides)}"
            )
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.patch_size % self.stride_product != 0:
            raise ShapeMismatch(
                f"patch_size {self.patch_size} must divide by the stride product "
                f"{self.stride_product}"
            )

    @property
    def stride_product(self) -> int:
        return math.prod(self.strides)

    def to_dict(self) -> dict:
        return {
            "input_bands": self.input_bands,
            "patch_size": self.patch_size,
            "filters": list(self.filters),
            "strides": list(self.strides),
            "kernel": self.kernel,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        return cls(**d)


class Discriminator(nn.Module):
    """D(.; beta) -> probability that a patch is ground truth."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        convs, norms = [], []
        in_ch = config.input_bands
        for n_f, stride in zip(config.filters, config.strides):
            convs.append(nn.Conv2d(in_ch, n_f, config.kernel, stride=stride,
                                   padding=config.kernel // 2))
            norms.append(nn.BatchNorm2d(n_f))
            in_ch = n_f
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        reduced = config.patch_size // config.stride_product
        self.dense = nn.Linear(config.filters[-1] * reduced * reduced, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.input_bands:
            raise ShapeMismatch(
                f"expected [batch, {self.config.input_bands}, p, p], got {tuple(x.shape)}"
            )
        if x.shape[-2] != self.config.patch_size or x.shape[-1] != self.config.patch_size:
            raise ShapeMismatch(
                f"discriminator is locked to patch size {self.config.patch_size}, "
                f"got {tuple(x.shape[-2:])}"
            )
        for conv, norm in zip(self.convs, self.norms):
            x = norm(F.leaky_relu(conv(x), self.config.leaky_slope))
        return torch.sigmoid(self.dense(x.flatten(1))).squeeze(1)


def d_forward(model: Discriminator, patches: torch.Tensor, train_mode: bool = False) -> torch.Tensor:
    """Run D with batch statistics (train_mode) or running statistics."""
    was_training = model.training
    model.train(train_mode)
    try:
        return model(patches)
    finally:
        model.train(was_training)


def build_discriminator(config: DiscriminatorConfig, seed: int = 0) -> Discriminator:
    """He-init convolutions, unit batch-norm, zeroed dense layer (so a fresh
    network outputs exactly 0.5). Deterministic given ``seed``."""
    model = Discriminator(config)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for conv in model.convs:
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            conv.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            conv.bias.zero_()
        for norm in model.norms:
            norm.weight.fill_(1.0)
            norm.bias.zero_()
        model.dense.weight.zero_()
        model.dense.bias.zero_()
    return model
