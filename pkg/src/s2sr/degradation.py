"""Scale-shift ("reduced resolution") training data construction.

Every group of a scene is degraded by the scaling factor so that the original
lower-resolution bands become the ground truth: the model is trained and
evaluated entirely against real pixels, never against simulated targets.
The ground-truth group is carried through bit-identical -- it is never
filtered.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MissingLr60, ShapeMismatch
from .raster_io import BandGroup, ScalingMode, Scene
from .resampling import ResampleSpec, downsample


@dataclass
class TrainingTriple:
    """(degraded LR input(s), degraded HR guidance, original-LR ground truth).

    ``lr_in`` is the 20 m-lineage degraded group in X2 mode; X6 additionally
    carries the degraded 60 m-lineage group in ``lr60_in``. ``gt`` holds the
    target bands at the scale the model must reproduce; ``hr_in`` shares gt's
    grid.
    """

    lr_in: BandGroup
    hr_in: BandGroup
    gt: BandGroup
    mode: ScalingMode
    scene_id: str = ""
    lr60_in: BandGroup | None = None

    @property
    def lr_groups(self) -> tuple[BandGroup, ...]:
        """Model LR inputs in concatenation order (20 m lineage first)."""
        if self.mode is ScalingMode.X2:
            return (self.lr_in,)
        return (self.lr_in, self.lr60_in)


def _crop_divisible(group: BandGroup, factor: int) -> BandGroup:
    """Top-left crop to the largest extent tiling exactly by ``factor``."""
    h, w = group.shape
    ch, cw = (h // factor) * factor, (w // factor) * factor
    if ch == 0 or cw == 0:
        raise ShapeMismatch(
            f"extent {h}x{w} too small to degrade by factor {factor}"
        )
    if (ch, cw) == (h, w):
        return group
    return BandGroup(group.bands, group.pixels[:, :ch, :cw], group.gsd_m, group.geo)


def degrade_scene(scene: Scene, mode: ScalingMode, spec: ResampleSpec | None = None) -> TrainingTriple:
    """Shift all resolutions down by ``mode``'s factor.

    X2: hr 10->20 m, lr20 20->40 m, ground truth = original lr20.
    X6: hr 10->60 m, lr20 20->120 m, lr60 60->360 m, ground truth = original
    lr60. Groups whose extent does not tile by the factor (the 60 m group of
    a scene whose HR extent is not a multiple of 36) are cropped top-left
    before decimation; the ground truth always keeps its full extent.
    """
    if spec is None:
        spec = ResampleSpec(factor=mode.factor)
    elif spec.factor != mode.factor:
        spec = ResampleSpec(factor=mode.factor, blur_sigma=spec.blur_sigma, boundary=spec.boundary)
    f = mode.factor

    if mode is ScalingMode.X2:
        hr_in = downsample(_crop_divisible(scene.hr, f), spec)
        lr_in = downsample(_crop_divisible(scene.lr20, f), spec)
        gt = scene.lr20
        lr60_in = None
    else:
        if scene.lr60 is None:
            raise MissingLr60(f"scene {scene.scene_id!r} has no 60 m bands; X6 unavailable")
        hr_in = downsample(_crop_divisible(scene.hr, f), spec)
        lr_in = downsample(_crop_divisible(scene.lr20, f), spec)
        lr60_in = downsample(_crop_divisible(scene.lr60, f), spec)
        gt = scene.lr60

    return TrainingTriple(
        lr_in=lr_in, hr_in=hr_in, gt=gt, mode=mode,
        scene_id=scene.scene_id, lr60_in=lr60_in,
    )
