"""Discriminator contracts: output range, stride plan, activation, gradients."""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from s2sr.discriminator import (
    Discriminator,
    DiscriminatorConfig,
    build_discriminator,
    d_forward,
)
from s2sr.errors import ShapeMismatch
from s2sr.losses import discriminator_loss

from conftest import clear_activation_kinks, max_grad_mismatch, randomize_params

CFG = DiscriminatorConfig(input_bands=6, patch_size=32)


def test_config_defaults_match_plan():
    assert CFG.filters == (64, 128, 128)
    assert CFG.strides == (2, 2, 1)
    assert CFG.stride_product == 4


def test_config_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        DiscriminatorConfig(filters=(64, 128), strides=(2, 2, 1))


def test_config_rejects_indivisible_patch():
    with pytest.raises(ShapeMismatch):
        DiscriminatorConfig(input_bands=6, patch_size=30)


def test_config_round_trip():
    cfg = DiscriminatorConfig(input_bands=3, patch_size=12, filters=(8,), strides=(2,))
    assert DiscriminatorConfig.from_dict(cfg.to_dict()) == cfg


def test_fresh_network_outputs_half():
    model = build_discriminator(CFG, seed=0)
    x = torch.rand(5, 6, 32, 32) * 3
    out = d_forward(model, x, train_mode=False)
    torch.testing.assert_close(out, torch.full((5,), 0.5))
    out_train = d_forward(model, x, train_mode=True)
    torch.testing.assert_close(out_train, torch.full((5,), 0.5))


def test_init_deterministic():
    a = build_discriminator(CFG, seed=4)
    b = build_discriminator(CFG, seed=4)
    for pa, pb in zip(a.state_dict().values(), b.state_dict().values()):
        assert torch.equal(pa, pb)


def test_batch_shape_contract():
    model = build_discriminator(CFG, seed=0)
    out = d_forward(model, torch.rand(128, 6, 32, 32))
    assert out.shape == (128,)


def test_output_strictly_in_unit_interval():
    model = randomize_params(build_discriminator(CFG, seed=1), seed=2, std=0.2)
    out = d_forward(model, torch.rand(16, 6, 32, 32) * 5, train_mode=True)
    assert bool((out > 0).all()) and bool((out < 1).all())


def test_wrong_patch_size_rejected():
    model = build_discriminator(CFG, seed=0)
    with pytest.raises(ShapeMismatch):
        d_forward(model, torch.rand(2, 6, 16, 16))
    with pytest.raises(ShapeMismatch):
        d_forward(model, torch.rand(2, 3, 32, 32))


def test_stride_plan_reduces_dims_by_four():
    model = build_discriminator(CFG, seed=0)
    x = torch.rand(2, 6, 32, 32)
    for conv in model.convs:
        x = conv(x)
    assert x.shape[-2:] == (8, 8)
    assert model.dense.in_features == 128 * 8 * 8


def test_leaky_relu_slope_on_frozen_block():
    cfg = DiscriminatorConfig(input_bands=1, patch_size=4, filters=(1,), strides=(1,))
    model = build_discriminator(cfg, seed=0)
    with torch.no_grad():
        model.convs[0].weight.zero_()
        model.convs[0].weight[0, 0, 1, 1] = 1.0  # identity kernel
        model.convs[0].bias.zero_()
    z = torch.linspace(-2, 2, 16).reshape(1, 1, 4, 4)
    activated = F.leaky_relu(model.convs[0](z), cfg.leaky_slope)
    neg = z < 0
    torch.testing.assert_close(activated[neg], cfg.leaky_slope * z[neg])
    torch.testing.assert_close(activated[~neg], z[~neg])


def test_batchnorm_train_vs_running_stats():
    model = randomize_params(build_discriminator(CFG, seed=3), seed=5, std=0.1)
    model.eval()
    x = torch.rand(8, 6, 32, 32)
    train_out = d_forward(model, x, train_mode=True)
    assert not model.training  # d_forward restores the module mode
    eval_out = d_forward(model, x, train_mode=False)
    assert not torch.allclose(train_out, eval_out)


def test_gradients_match_finite_differences():
    cfg = DiscriminatorConfig(input_bands=3, patch_size=8, filters=(8,), strides=(2,))
    model = randomize_params(build_discriminator(cfg, seed=0), seed=7).double()
    rng = np.random.default_rng(8)
    real = torch.from_numpy(rng.uniform(0, 2, (4, 3, 8, 8))).double()
    fake = torch.from_numpy(rng.uniform(0, 2, (4, 3, 8, 8))).double()

    def loss_fn():
        return discriminator_loss(
            d_forward(model, real, train_mode=True),
            d_forward(model, fake, train_mode=True),
        )

    clear_activation_kinks(loss_fn, list(model.convs))
    params = [p for p in model.parameters() if p.requires_grad]
    assert max_grad_mismatch(loss_fn, params) < 1e-4
