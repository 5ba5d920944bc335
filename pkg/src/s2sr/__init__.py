"""Guided super-resolution of multi-resolution Sentinel-2 band groups.

The pipeline degrades scenes to build training triples whose ground truth is
real imagery, trains a residual generator (optionally against a convolutional
discriminator), super-resolves the 20 m / 60 m band groups to the 10 m grid
guided by the native 10 m bands, and scores results with RMSE / SRE / SAM /
UIQ.
"""

from .degradation import TrainingTriple, degrade_scene
from .errors import S2SRError
from .raster_io import (
    DN_SCALE,
    BandGroup,
    GeoRef,
    ScalingMode,
    Scene,
    load_band_group,
    load_scene,
    save_band_group,
    save_scene,
)
from .resampling import ResampleSpec, downsample, upsample_bicubic, upsample_bilinear

__all__ = [
    "BandGroup",
    "DN_SCALE",
    "GeoRef",
    "ResampleSpec",
    "S2SRError",
    "ScalingMode",
    "Scene",
    "TrainingTriple",
    "degrade_scene",
    "downsample",
    "load_band_group",
    "load_scene",
    "save_band_group",
    "save_scene",
    "upsample_bicubic",
    "upsample_bilinear",
]

__version__ = "0.1.0"
