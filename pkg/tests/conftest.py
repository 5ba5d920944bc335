import numpy as np
import pytest
import torch

from s2sr.raster_io import HR_BANDS, LR20_BANDS, LR60_BANDS, BandGroup, Scene


def random_group(bands, h, w, seed=0, gsd=20.0, lo=0.0, hi=10000.0):
    rng = np.random.default_rng(seed)
    pixels = rng.uniform(lo, hi, size=(len(bands), h, w))
    return BandGroup(list(bands), pixels, gsd_m=gsd)


def constant_group(bands, h, w, value, gsd=20.0):
    return BandGroup(list(bands), np.full((len(bands), h, w), value), gsd_m=gsd)


def random_scene(size=24, seed=0, with_lr60=True):
    rng = np.random.default_rng(seed)
    hr = BandGroup(HR_BANDS, rng.uniform(0, 5000, (4, size, size)), gsd_m=10.0)
    lr20 = BandGroup(LR20_BANDS, rng.uniform(0, 5000, (6, size // 2, size // 2)), gsd_m=20.0)
    lr60 = None
    if with_lr60:
        lr60 = BandGroup(LR60_BANDS, rng.uniform(0, 5000, (3, size // 6, size // 6)), gsd_m=60.0)
    return Scene(hr=hr, lr20=lr20, lr60=lr60, scene_id=f"rand{seed}")


@pytest.fixture
def tmp_scene_dir(tmp_path):
    return tmp_path / "scene"


# ---------------------------------------------------------------------------
# finite-difference gradient checking (float64, central differences)


def randomize_params(model, seed, std=0.08):
    """Give every parameter a nonzero random value so no gradient is trivially
    zero (fresh networks have zeroed output layers)."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(0.0, std, generator=gen)
    return model


def clear_activation_kinks(run_fn, convs, margin=0.05):
    """Shift conv biases so every (leaky-)ReLU pre-activation clears ``margin``.

    Central differences are only valid where the loss is smooth within the
    step; a random net evaluates some pre-activations within 1e-3 of zero, so
    the FD picks up the kink instead of the derivative. Layers are adjusted
    in forward order because each shift changes downstream activations.
    """
    for conv in convs:
        captured = []

        def hook(_m, _i, out):
            captured.append(out.detach())

        handle = conv.register_forward_hook(hook)
        with torch.no_grad():
            run_fn()
        handle.remove()
        dims = tuple(d for d in range(captured[0].ndim) if d != 1)
        mins = torch.stack([z.amin(dim=dims) for z in captured]).amin(dim=0)
        with torch.no_grad():
            conv.bias += (margin - mins).clamp(min=0.0)


def analytic_grads(loss_fn, params):
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    return [p.grad.detach().clone() for p in params]


def finite_diff_grads(loss_fn, params, h=1e-3):
    grads = []
    with torch.no_grad():
        for p in params:
            flat = p.data.view(-1)
            g = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                g[i] = (up - down) / (2.0 * h)
            grads.append(g.view(p.shape))
    return grads


def max_grad_mismatch(loss_fn, params, h=1e-3, floor=1e-2):
    """Worst guarded-relative disagreement between analytic and FD gradients.

    Central differences at step h=1e-3 carry O(h^2) truncation error, measured
    at up to ~7e-7 absolute through batch-norm/sigmoid/log compositions, so
    elements below ``floor`` are held to the absolute bound ``floor * rtol``
    rather than a meaningless ratio of noise; everything larger is compared
    relatively.
    """
    an = analytic_grads(loss_fn, params)
    fd = finite_diff_grads(loss_fn, params, h=h)
    worst = 0.0
    for a, f in zip(an, fd):
        denom = torch.maximum(torch.maximum(a.abs(), f.abs()), torch.tensor(floor, dtype=a.dtype))
        worst = max(worst, float(((a - f).abs() / denom).max()))
    return worst
