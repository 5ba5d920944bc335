"""Training loop determinism, ablation equivalence, checkpoint/resume."""

import math

import numpy as np
import pytest
import torch

from s2sr.degradation import degrade_scene
from s2sr.discriminator import DiscriminatorConfig
from s2sr.errors import DataExhausted, VersionMismatch
from s2sr.generator import GeneratorConfig
from s2sr.losses import LossWeights
from s2sr.raster_io import ScalingMode
from s2sr.synthetic import make_scene
from s2sr.trainer import (
    TrainConfig,
    TrainLog,
    load_checkpoint,
    save_checkpoint,
    train,
)

from conftest import random_scene
from test_degradation import constant_scene

G_TINY = GeneratorConfig(mode=ScalingMode.X2, n_res_blocks=2, n_filters=8)
D_TINY = DiscriminatorConfig(input_bands=6, patch_size=12, filters=(8, 8, 8))


def tiny_cfg(**kw):
    base = dict(
        mode=ScalingMode.X2, batch_size=4, epochs=2, steps_per_epoch=5,
        patch_size=12, seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def toy_triples():
    return [degrade_scene(make_scene(f"s{i}", size=48, seed=i), ScalingMode.X2)
            for i in range(3)]


def params_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return all(torch.equal(sa[k], sb[k]) for k in sa)


def test_two_runs_are_bit_identical(toy_triples, tmp_path):
    r1 = train(toy_triples, G_TINY, D_TINY, tiny_cfg(), checkpoint_dir=tmp_path / "a")
    r2 = train(toy_triples, G_TINY, D_TINY, tiny_cfg(), checkpoint_dir=tmp_path / "b")
    assert r1.log.to_ndjson() == r2.log.to_ndjson()
    assert params_equal(r1.generator, r2.generator)
    assert params_equal(r1.discriminator, r2.discriminator)
    assert (tmp_path / "a" / "final.s2ck").read_bytes() == \
        (tmp_path / "b" / "final.s2ck").read_bytes()


def test_different_seed_diverges(toy_triples):
    r1 = train(toy_triples, G_TINY, D_TINY, tiny_cfg(seed=0))
    r2 = train(toy_triples, G_TINY, D_TINY, tiny_cfg(seed=1))
    assert not params_equal(r1.generator, r2.generator)


def test_one_d_and_one_g_update_per_iteration(toy_triples):
    result = train(toy_triples, G_TINY, D_TINY, tiny_cfg())
    total = 2 * 5
    assert result.log.g_updates == total
    assert result.log.d_updates == total
    for rec in result.log.steps:
        assert {"step", "d_loss", "g_content", "g_adv", "d_real_mean", "d_fake_mean"} \
            <= set(rec)
    assert [r["step"] for r in result.log.steps] == list(range(total))


def test_ablation_skips_discriminator(toy_triples):
    result = train(toy_triples, G_TINY, None, tiny_cfg(ablation_content_only=True))
    assert result.discriminator is None
    assert result.log.d_updates == 0
    assert result.log.g_updates == 10
    assert all("d_loss" not in rec for rec in result.log.steps)


def test_zero_lambda_matches_ablation_trajectory(toy_triples):
    gan = train(toy_triples, G_TINY, D_TINY,
                tiny_cfg(loss_weights=LossWeights(lambda_adv=0.0)))
    abl = train(toy_triples, G_TINY, None, tiny_cfg(ablation_content_only=True))
    assert params_equal(gan.generator, abl.generator)
    # the discriminator was still trained on the side
    assert gan.log.d_updates == 10


def test_g_pretrain_delays_adversarial_term(toy_triples):
    result = train(toy_triples, G_TINY, D_TINY, tiny_cfg(g_pretrain_steps=4))
    assert result.log.d_updates == 6
    assert "g_adv" not in result.log.steps[3]
    assert "g_adv" in result.log.steps[4]


def test_constant_scene_ablation_converges_immediately():
    triples = [degrade_scene(constant_scene(24, 700.0), ScalingMode.X2)]
    cfg = tiny_cfg(epochs=1, steps_per_epoch=3, ablation_content_only=True)
    result = train(triples, G_TINY, None, cfg)
    # constants ride the skip path exactly: content loss starts and stays ~0
    assert all(rec["g_content"] < 1e-3 for rec in result.log.steps)


def test_validation_records_and_best(toy_triples, tmp_path):
    val = [degrade_scene(random_scene(size=48, seed=9), ScalingMode.X2)]
    result = train(toy_triples, G_TINY, D_TINY, tiny_cfg(),
                   val_triples=val, checkpoint_dir=tmp_path)
    assert len(result.log.vals) == 2
    assert result.best_val_mae is not None
    assert (tmp_path / "best.s2ck").exists()
    assert (tmp_path / "final.s2ck").exists()
    for rec in result.log.vals:
        assert math.isfinite(rec["val_rmse"])


def test_empty_dataset_raises():
    with pytest.raises(DataExhausted):
        train([], G_TINY, D_TINY, tiny_cfg())


def test_train_config_round_trip():
    cfg = tiny_cfg(loss_weights=LossWeights(lambda_adv=0.01, non_saturating=True),
                   g_pretrain_steps=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_trainlog_ndjson_round_trip(toy_triples):
    result = train(toy_triples, G_TINY, D_TINY, tiny_cfg(epochs=1))
    text = result.log.to_ndjson()
    back = TrainLog.from_ndjson(text)
    assert back.meta == result.log.meta
    assert back.steps == result.log.steps
    assert back.d_updates == result.log.d_updates


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_bytes(toy_triples, tmp_path):
    result = train(toy_triples, G_TINY, D_TINY, tiny_cfg(epochs=1))
    p1 = tmp_path / "one.s2ck"
    p2 = tmp_path / "two.s2ck"
    save_checkpoint(p1, result.generator, result.discriminator, step=5)
    loaded = load_checkpoint(p1)
    save_checkpoint(p2, loaded.build_generator(), loaded.build_discriminator(), step=5)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.step == 5
    assert params_equal(loaded.build_generator(), result.generator)
    assert params_equal(loaded.build_discriminator(), result.discriminator)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.s2ck"
    result_gen = train(
        [degrade_scene(constant_scene(24, 1.0), ScalingMode.X2)],
        G_TINY, None, tiny_cfg(epochs=1, steps_per_epoch=1, ablation_content_only=True),
    ).generator
    save_checkpoint(path, result_gen)
    blob = path.read_bytes()
    path.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_resume_matches_uninterrupted(toy_triples, tmp_path):
    full_cfg = tiny_cfg(epochs=2, steps_per_epoch=4)
    full = train(toy_triples, G_TINY, D_TINY, full_cfg)

    # snapshot the state mid-epoch at global step 6 of 8, then resume from it
    part_cfg = tiny_cfg(epochs=2, steps_per_epoch=4, checkpoint_every=6)
    train(toy_triples, G_TINY, D_TINY, part_cfg, checkpoint_dir=tmp_path)
    resumed = train(toy_triples, G_TINY, D_TINY, part_cfg,
                    resume_from=tmp_path / "latest.s2ck")
    assert params_equal(full.generator, resumed.generator)
    assert params_equal(full.discriminator, resumed.discriminator)
