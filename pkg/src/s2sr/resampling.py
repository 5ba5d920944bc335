"""Deterministic spatial resampling kernels.

All kernels share one alignment convention: output sample ``i`` reads the
input at coordinate ``(i + 0.5) * in/out - 0.5``, clamped to the valid range
(pixel-center alignment). Upsampling supports the integer factors 2 and 6
plus arbitrary target shapes (needed when a 60 m-lineage group is ragged
against the HR grid); downsampling is a Gaussian blur followed by exact
block averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BadFactor, ShapeNotDivisible
from .raster_io import BandGroup

SUPPORTED_FACTORS = (2, 6)

# Blur std-dev is truncated at this many sigmas, matching the brute-force
# reference used in the tests.
GAUSS_TRUNCATE = 4.0


@dataclass(frozen=True)
class ResampleSpec:
    """Degradation parameters: decimation factor and pre-blur width.

    ``blur_sigma`` is the Gaussian std-dev in *output*-pixel units; the blur
    applied before decimation therefore has std ``blur_sigma * factor`` input
    pixels. The default 1/2 approximates the sensor MTF; plain decimation
    would alias.
    """

    factor: int
    blur_sigma: float = 0.5
    boundary: str = "reflect"

    def __post_init__(self):
        if self.factor not in SUPPORTED_FACTORS:
            raise BadFactor(f"factor must be one of {SUPPORTED_FACTORS}, got {self.factor}")
        if not self.blur_sigma > 0:
            raise ValueError(f"blur_sigma must be positive, got {self.blur_sigma}")
        if self.boundary != "reflect":
            raise ValueError(f"unsupported boundary {self.boundary!r}")


def _source_coords(n_in: int, n_out: int) -> np.ndarray:
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(src, 0.0, n_in - 1.0)


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = _source_coords(n_in, n_out)
    i0 = np.clip(np.floor(src).astype(np.int64), 0, max(n_in - 2, 0))
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def _resize_bilinear_2d(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    r0, r1, fr = _bilinear_axis(plane.shape[0], out_h)
    c0, c1, fc = _bilinear_axis(plane.shape[1], out_w)
    top = plane[r0][:, c0] * (1 - fc) + plane[r0][:, c1] * fc
    bot = plane[r1][:, c0] * (1 - fc) + plane[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def _cubic_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Catmull-Rom kernel (a = -0.5)."""
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def _bicubic_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    src = _source_coords(n_in, n_out)
    base = np.floor(src).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    weights = _cubic_weight(src[:, None] - taps)
    taps = np.clip(taps, 0, n_in - 1)  # replicate edges
    return taps, weights


def _resize_bicubic_2d(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    rt, rw = _bicubic_axis(plane.shape[0], out_h)
    ct, cw = _bicubic_axis(plane.shape[1], out_w)
    rows = np.einsum("ik,ikj->ij", rw, plane[rt])           # [out_h, in_w]
    return np.einsum("jl,ijl->ij", cw, rows[:, ct])          # [out_h, out_w]


def _check_factor(factor: int):
    if factor not in SUPPORTED_FACTORS:
        raise BadFactor(f"factor must be one of {SUPPORTED_FACTORS}, got {factor}")


def _resize_group(group: BandGroup, out_h: int, out_w: int, resize_2d, scale: float) -> BandGroup:
    planes = [
        resize_2d(group.pixels[b].astype(np.float64), out_h, out_w)
        for b in range(len(group.bands))
    ]
    geo = group.geo.scaled(scale) if group.geo is not None else None
    return BandGroup(list(group.bands), np.stack(planes), group.gsd_m * scale, geo)


def upsample_bilinear(group: BandGroup, factor: int) -> BandGroup:
    """Bilinear upsampling by an integer factor (2 or 6)."""
    _check_factor(factor)
    h, w = group.shape
    return _resize_group(group, h * factor, w * factor, _resize_bilinear_2d, 1.0 / factor)


def upsample_bicubic(group: BandGroup, factor: int) -> BandGroup:
    """Catmull-Rom bicubic upsampling by an integer factor (2 or 6)."""
    _check_factor(factor)
    h, w = group.shape
    return _resize_group(group, h * factor, w * factor, _resize_bicubic_2d, 1.0 / factor)


def resize_bilinear(group: BandGroup, out_shape: tuple[int, int]) -> BandGroup:
    """Bilinear resize to an explicit target shape (used for ragged 60 m groups)."""
    h, w = group.shape
    out_h, out_w = out_shape
    scale = ((h / out_h) * (w / out_w)) ** 0.5
    return _resize_group(group, out_h, out_w, _resize_bilinear_2d, scale)


def downsample(group: BandGroup, spec: ResampleSpec) -> BandGroup:
    """Gaussian blur then area-average decimation over factor x factor blocks.

    The blur std is ``spec.blur_sigma * factor`` input pixels, truncated at
    4 sigma, with half-sample-symmetric reflect boundaries.
    """
    f = spec.factor
    h, w = group.shape
    if h % f != 0 or w % f != 0:
        raise ShapeNotDivisible(f"shape {h}x{w} does not tile by factor {f}")
    sigma = spec.blur_sigma * f
    out = np.empty((len(group.bands), h // f, w // f), dtype=np.float64)
    for b in range(len(group.bands)):
        blurred = ndimage.gaussian_filter(
            group.pixels[b].astype(np.float64), sigma=sigma,
            mode="reflect", truncate=GAUSS_TRUNCATE,
        )
        out[b] = blurred.reshape(h // f, f, w // f, f).mean(axis=(1, 3))
    geo = group.geo.scaled(float(f)) if group.geo is not None else None
    return BandGroup(list(group.bands), out, group.gsd_m * f, geo)
