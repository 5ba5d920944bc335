"""Synthetic multi-resolution scenes for tests and dry-run experiments.

Every band is an affine mapping of one shared spatial field (band-correlated
by construction, like real acquisitions) plus a small independent noise
floor. The field mixes smoothed noise at two scales with piecewise-constant
rectangles, so it carries both texture and sharp structure. Lower-resolution
groups are produced by degrading an underlying full-resolution field, which
keeps all groups co-registered under the pixel-center convention.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .raster_io import HR_BANDS, LR20_BANDS, LR60_BANDS, BandGroup, Scene
from .resampling import ResampleSpec, downsample


def _field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Shared spatial pattern in [0, 1]: filtered noise + rectangles + a ramp."""
    coarse = ndimage.gaussian_filter(rng.standard_normal((size, size)), 3.0)
    fine = ndimage.gaussian_filter(rng.standard_normal((size, size)), 0.8)
    f = 1.0 * coarse + 0.6 * fine
    for _ in range(8):
        h = int(rng.integers(size // 8, size // 2))
        w = int(rng.integers(size // 8, size // 2))
        r = int(rng.integers(0, size - h))
        c = int(rng.integers(0, size - w))
        f[r:r + h, c:c + w] += rng.uniform(-1.0, 1.0)
    ramp = np.linspace(0.0, 1.0, size)
    f += 0.3 * ramp[None, :] + 0.2 * ramp[:, None]
    f -= f.min()
    f /= f.max()
    return f


def make_scene(
    scene_id: str,
    size: int = 120,
    seed: int = 0,
    with_lr60: bool = True,
    noise_dn: float = 3.0,
) -> Scene:
    """Build a co-registered scene of ``size x size`` HR pixels (multiple of 6).

    Band values land in a plausible DN range (roughly 300..4500). The same
    field drives every band through per-band gain/offset, so HR guidance is
    informative for the lower-resolution targets.
    """
    if size % 6 != 0:
        raise ValueError(f"size must be a multiple of 6, got {size}")
    rng = np.random.default_rng([seed, 0x53594E])
    f = _field(rng, size)

    def band_stack(names: list[str]) -> np.ndarray:
        planes = []
        for _ in names:
            gain = rng.uniform(1500.0, 3500.0)
            offset = rng.uniform(300.0, 900.0)
            noise = rng.standard_normal((size, size)) * noise_dn
            planes.append(offset + gain * f + noise)
        return np.stack(planes)

    hr = BandGroup(list(HR_BANDS), band_stack(HR_BANDS), gsd_m=10.0)
    lr20_full = BandGroup(list(LR20_BANDS), band_stack(LR20_BANDS), gsd_m=10.0)
    lr20 = downsample(lr20_full, ResampleSpec(factor=2))
    lr60 = None
    if with_lr60:
        lr60_full = BandGroup(list(LR60_BANDS), band_stack(LR60_BANDS), gsd_m=10.0)
        lr60 = downsample(lr60_full, ResampleSpec(factor=6))
    return Scene(hr=hr, lr20=lr20, lr60=lr60, scene_id=scene_id)
