"""Scale-shift triple construction."""

import numpy as np
import pytest

from s2sr.degradation import degrade_scene
from s2sr.errors import MissingLr60, ShapeMismatch
from s2sr.raster_io import HR_BANDS, LR20_BANDS, LR60_BANDS, BandGroup, ScalingMode, Scene
from s2sr.resampling import ResampleSpec

from conftest import random_scene


def constant_scene(size, value, with_lr60=True):
    hr = BandGroup(HR_BANDS, np.full((4, size, size), value), gsd_m=10.0)
    lr20 = BandGroup(LR20_BANDS, np.full((6, size // 2, size // 2), value), gsd_m=20.0)
    lr60 = None
    if with_lr60:
        lr60 = BandGroup(LR60_BANDS, np.full((3, size // 6, size // 6), value), gsd_m=60.0)
    return Scene(hr=hr, lr20=lr20, lr60=lr60, scene_id="const")


def test_x2_shape_arithmetic():
    scene = random_scene(size=120, seed=0)
    t = degrade_scene(scene, ScalingMode.X2)
    assert t.hr_in.pixels.shape == (4, 60, 60)
    assert t.lr_in.pixels.shape == (6, 30, 30)
    assert t.gt.pixels.shape == (6, 60, 60)
    assert t.lr60_in is None
    assert t.hr_in.gsd_m == pytest.approx(20.0)
    assert t.lr_in.gsd_m == pytest.approx(40.0)


def test_x6_shape_arithmetic():
    scene = random_scene(size=120, seed=1)
    t = degrade_scene(scene, ScalingMode.X6)
    assert t.hr_in.pixels.shape == (4, 20, 20)
    assert t.lr_in.pixels.shape == (6, 10, 10)
    # 20x20 60 m group crops to 18x18 before /6 decimation
    assert t.lr60_in.pixels.shape == (3, 3, 3)
    assert t.gt.pixels.shape == (3, 20, 20)
    assert t.lr_in.gsd_m == pytest.approx(120.0)
    assert t.lr60_in.gsd_m == pytest.approx(360.0)


def test_constant_scene_stays_constant():
    scene = constant_scene(36, 321.0)
    for mode in (ScalingMode.X2, ScalingMode.X6):
        t = degrade_scene(scene, mode)
        for member in (t.lr_in, t.hr_in, t.gt, t.lr60_in):
            if member is None:
                continue
            np.testing.assert_allclose(member.pixels, 321.0, rtol=1e-6)


def test_gt_is_bit_identical_to_original():
    scene = random_scene(size=36, seed=2)
    t2 = degrade_scene(scene, ScalingMode.X2)
    np.testing.assert_array_equal(t2.gt.pixels, scene.lr20.pixels)
    assert t2.gt.bands == scene.lr20.bands
    t6 = degrade_scene(scene, ScalingMode.X6)
    np.testing.assert_array_equal(t6.gt.pixels, scene.lr60.pixels)


def test_x6_without_lr60_raises():
    scene = random_scene(size=24, with_lr60=False)
    with pytest.raises(MissingLr60):
        degrade_scene(scene, ScalingMode.X6)


def test_spec_factor_is_forced_to_mode():
    scene = random_scene(size=24, seed=3)
    t = degrade_scene(scene, ScalingMode.X2, ResampleSpec(factor=6, blur_sigma=0.4))
    assert t.lr_in.pixels.shape == (6, 6, 6)  # factor 2 applied, sigma kept


def test_too_small_scene_rejected():
    scene = random_scene(size=24, seed=4)  # lr60 is 4x4, under the /6 step
    with pytest.raises(ShapeMismatch):
        degrade_scene(scene, ScalingMode.X6)


def test_lr_groups_order():
    scene = random_scene(size=36, seed=5)
    t2 = degrade_scene(scene, ScalingMode.X2)
    assert t2.lr_groups == (t2.lr_in,)
    t6 = degrade_scene(scene, ScalingMode.X6)
    assert t6.lr_groups == (t6.lr_in, t6.lr60_in)
