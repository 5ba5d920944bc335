"""Residual generator for guided band super-resolution.

The LR group(s) are bilinearly upsampled to the guidance grid, concatenated
with the HR bands, passed through a head convolution and a stack of
batch-norm-free residual blocks, and the upsampled target bands are added
back through a long skip connection. With the final convolution zeroed (the
initial state) the network is therefore exactly a bilinear upsampler, which
anchors the output radiometry to the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .degradation import TrainingTriple
from .errors import ShapeMismatch, UntrainedParams
from .raster_io import DN_SCALE, BandGroup, ScalingMode, Scene

DEFAULT_TILE = 96
DEFAULT_TILE_OVERLAP = 8


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture hyperparameters of the generator."""

    mode: ScalingMode = ScalingMode.X2
    n_res_blocks: int = 18
    n_filters: int = 128
    kernel: int = 3
    residual_scale: float = 0.1

    def __post_init__(self):
        if self.n_res_blocks < 1:
            raise ValueError(f"n_res_blocks must be >= 1, got {self.n_res_blocks}")
        if self.n_filters < 1:
            raise ValueError(f"n_filters must be >= 1, got {self.n_filters}")
        if self.kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {self.kernel}")

    @property
    def out_bands(self) -> int:
        return self.mode.out_bands

    @property
    def in_channels(self) -> int:
        # upsampled LR group(s) plus 4 guidance bands
        return 6 + 4 if self.mode is ScalingMode.X2 else 6 + 3 + 4

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.name.lower(),
            "n_res_blocks": self.n_res_blocks,
            "n_filters": self.n_filters,
            "kernel": self.kernel,
            "residual_scale": self.residual_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["mode"] = ScalingMode.parse(d["mode"])
        return cls(**d)


def _conv(in_ch: int, out_ch: int, kernel: int) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, padding=kernel // 2, padding_mode="reflect")


class ResidualBlock(nn.Module):
    """conv-ReLU-conv with a scaled identity bypass, no normalization."""

    def __init__(self, n_filters: int, kernel: int, scale: float):
        super().__init__()
        self.conv1 = _conv(n_filters, n_filters, kernel)
        self.conv2 = _conv(n_filters, n_filters, kernel)
        self.scale = scale

    def forward(self, x):
        return x + self.scale * self.conv2(F.relu(self.conv1(x)))


class Generator(nn.Module):
    """G(I_LR, I_HR; theta) on normalized inputs.

    ``lr`` is a tensor in X2 mode or a (20 m-lineage, 60 m-lineage) pair in
    X6 mode; ``hr`` carries the four guidance bands and fixes the output
    grid.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.head = _conv(config.in_channels, config.n_filters, config.kernel)
        self.body = nn.Sequential(*[
            ResidualBlock(config.n_filters, config.kernel, config.residual_scale)
            for _ in range(config.n_res_blocks)
        ])
        self.tail = _conv(config.n_filters, config.out_bands, config.kernel)

    def _split_lr(self, lr) -> tuple[torch.Tensor, torch.Tensor | None]:
        if self.config.mode is ScalingMode.X2:
            if isinstance(lr, (tuple, list)):
                (lr,) = lr
            if lr.shape[1] != 6:
                raise ShapeMismatch(f"X2 expects 6 LR bands, got {lr.shape[1]}")
            return lr, None
        if not isinstance(lr, (tuple, list)) or len(lr) != 2:
            raise ShapeMismatch("X6 expects an LR pair (20 m lineage, 60 m lineage)")
        lr20, lr60 = lr
        if lr20.shape[1] != 6 or lr60.shape[1] != 3:
            raise ShapeMismatch(
                f"X6 expects 6+3 LR bands, got {lr20.shape[1]}+{lr60.shape[1]}"
            )
        return lr20, lr60

    def forward(self, lr, hr: torch.Tensor) -> torch.Tensor:
        if hr.shape[1] != 4:
            raise ShapeMismatch(f"expected 4 guidance bands, got {hr.shape[1]}")
        size = hr.shape[-2:]
        lr20, lr60 = self._split_lr(lr)
        up20 = F.interpolate(lr20, size=size, mode="bilinear", align_corners=False)
        if lr60 is None:
            skip = up20
            x = torch.cat([up20, hr], dim=1)
        else:
            up60 = F.interpolate(lr60, size=size, mode="bilinear", align_corners=False)
            skip = up60
            x = torch.cat([up20, up60, hr], dim=1)
        x = F.relu(self.head(x))
        return skip + self.tail(self.body(x))


def build_generator(config: GeneratorConfig, seed: int = 0) -> Generator:
    """He fan-in init for head/body, zeroed tail so the fresh network is the
    identity bilinear upsampler. Deterministic given ``seed``."""
    model = Generator(config)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                m.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
                m.bias.zero_()
        model.tail.weight.zero_()
        model.tail.bias.zero_()
    return model


def check_finite(model: nn.Module):
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise UntrainedParams(f"parameter {name} contains non-finite values")


# ---------------------------------------------------------------------------
# full-scene inference


def _to_tensor(group: BandGroup, scale: float) -> torch.Tensor:
    return torch.from_numpy(group.pixels.astype(np.float32) / scale)[None]


def _forward_full(model: Generator, lr_list, hr) -> torch.Tensor:
    lr = lr_list[0] if len(lr_list) == 1 else tuple(lr_list)
    return model(lr, hr)


def _tiled_forward(
    model: Generator, lr_list: list[torch.Tensor], hr: torch.Tensor,
    tile: int, overlap: int,
) -> torch.Tensor:
    """Run the model over overlapping tiles and stitch the center crops.

    Tile cores partition the output grid; each core is expanded by ``overlap``
    pixels per side (clamped at the image border, rounded to the LR alignment
    step) before the forward pass, and only the core region is kept.
    Requires every LR group to align exactly with the output grid.
    """
    _, _, h, w = hr.shape
    align = 2 if model.config.mode is ScalingMode.X2 else 6
    ratios = []
    for t in lr_list:
        rh = h // t.shape[-2]
        if t.shape[-2] * rh != h or t.shape[-1] * rh != w:
            raise ShapeMismatch(
                f"tiled inference needs exact LR/HR alignment, got {tuple(t.shape[-2:])} "
                f"against {(h, w)}"
            )
        ratios.append(rh)
    out = torch.empty((hr.shape[0], model.config.out_bands, h, w), dtype=hr.dtype)

    def expand(c0: int, c1: int, n: int) -> tuple[int, int]:
        e0 = max(0, (c0 - overlap) // align * align)
        e1 = min(n, -(-(c1 + overlap) // align) * align)
        return e0, e1

    for r0 in range(0, h, tile):
        r1 = min(r0 + tile, h)
        er0, er1 = expand(r0, r1, h)
        for c0 in range(0, w, tile):
            c1 = min(c0 + tile, w)
            ec0, ec1 = expand(c0, c1, w)
            lr_tiles = [
                t[:, :, er0 // r:er1 // r, ec0 // r:ec1 // r]
                for t, r in zip(lr_list, ratios)
            ]
            hr_tile = hr[:, :, er0:er1, ec0:ec1]
            sr = _forward_full(model, lr_tiles, hr_tile)
            out[:, :, r0:r1, c0:c1] = sr[:, :, r0 - er0:r1 - er0, c0 - ec0:c1 - ec0]
    return out


def _super_resolve_arrays(
    model: Generator, lr_groups: tuple[BandGroup, ...], hr: BandGroup,
    tile: int, overlap: int, scale: float,
) -> np.ndarray:
    check_finite(model)
    model.eval()
    hr_t = _to_tensor(hr, scale)
    lr_ts = [_to_tensor(g, scale) for g in lr_groups]
    h, w = hr.shape
    aligned = all(
        h % t.shape[-2] == 0 and w % t.shape[-1] == 0 for t in lr_ts
    )
    with torch.no_grad():
        if tile >= max(h, w) or not aligned:
            sr = _forward_full(model, lr_ts, hr_t)
        else:
            sr = _tiled_forward(model, lr_ts, hr_t, tile, overlap)
    return sr[0].numpy().astype(np.float64) * scale


def super_resolve(
    model: Generator,
    scene: Scene,
    mode: ScalingMode | None = None,
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_TILE_OVERLAP,
    scale: float = DN_SCALE,
) -> BandGroup:
    """Super-resolve a scene's LR group to the 10 m grid, in DN units."""
    mode = mode or model.config.mode
    if mode is not model.config.mode:
        raise ShapeMismatch(f"model is {model.config.mode.name}, requested {mode.name}")
    if mode is ScalingMode.X2:
        lr_groups: tuple[BandGroup, ...] = (scene.lr20,)
    else:
        if scene.lr60 is None:
            raise ShapeMismatch("X6 super-resolution needs the 60 m group")
        lr_groups = (scene.lr20, scene.lr60)
    pixels = _super_resolve_arrays(model, lr_groups, scene.hr, tile, overlap, scale)
    return BandGroup(mode.target_bands, pixels, scene.hr.gsd_m, scene.hr.geo)


def super_resolve_triple(
    model: Generator,
    triple: TrainingTriple,
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_TILE_OVERLAP,
    scale: float = DN_SCALE,
) -> BandGroup:
    """Super-resolve a degraded triple's inputs onto the ground-truth grid."""
    if triple.mode is not model.config.mode:
        raise ShapeMismatch(f"model is {model.config.mode.name}, triple is {triple.mode.name}")
    pixels = _super_resolve_arrays(model, triple.lr_groups, triple.hr_in, tile, overlap, scale)
    return BandGroup(triple.mode.target_bands, pixels, triple.gt.gsd_m, triple.gt.geo)
