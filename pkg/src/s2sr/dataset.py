"""Patch sampling and batch assembly for training.

Sampling is a deterministic function of (seed, epoch): each epoch draws a
stratified window list up front (every scene covered at least once, the rest
uniform with replacement), and batches are materialized from that list in
order. Prefetch workers only split the materialization work, so the emitted
stream is identical for any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .degradation import TrainingTriple
from .errors import DataExhausted, PatchTooLarge
from .raster_io import DN_SCALE, ScalingMode, load_band_group, save_band_group

TRIPLE_MEMBERS = ("lr_in", "hr_in", "gt", "lr60_in")


@dataclass
class PatchBatch:
    """One mini-batch of co-registered windows, on the ground-truth grid.

    ``lr_patches`` is ``[batch, bands, p/f, p/f]``; X6 mode adds
    ``lr60_patches`` at ``p/6``. ``hr_patches`` and ``gt_patches`` share the
    full ``p x p`` window.
    """

    lr_patches: np.ndarray
    hr_patches: np.ndarray
    gt_patches: np.ndarray
    patch_size: int
    mode: ScalingMode
    lr60_patches: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return self.gt_patches.shape[0]


def _scaled(batch: PatchBatch, scale: float, inverse: bool) -> PatchBatch:
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    factor = scale if inverse else 1.0 / scale

    def apply(a):
        if a is None:
            return None
        return a.astype(np.float64) * factor

    return replace(
        batch,
        lr_patches=apply(batch.lr_patches),
        hr_patches=apply(batch.hr_patches),
        gt_patches=apply(batch.gt_patches),
        lr60_patches=apply(batch.lr60_patches),
    )


def normalize(batch: PatchBatch, scale: float = DN_SCALE) -> PatchBatch:
    """Divide every pixel array by ``scale`` (model-boundary normalization).

    Computed in float64 so normalize followed by denormalize is the identity
    to machine precision.
    """
    return _scaled(batch, scale, inverse=False)


def denormalize(batch: PatchBatch, scale: float = DN_SCALE) -> PatchBatch:
    return _scaled(batch, scale, inverse=True)


# ---------------------------------------------------------------------------
# window planning


def _max_origin(triple: TrainingTriple, patch_size: int) -> tuple[int, int]:
    """Largest valid window origin per axis, on the gt grid.

    The 20 m-lineage input sits at gt/2 in both modes; the 60 m-lineage input
    at gt/6. Ragged LR groups (cropped before decimation) bound the extent.
    """
    gh, gw = triple.gt.shape
    gh = min(gh, triple.hr_in.shape[0], triple.lr_in.shape[0] * 2)
    gw = min(gw, triple.hr_in.shape[1], triple.lr_in.shape[1] * 2)
    if triple.lr60_in is not None:
        gh = min(gh, triple.lr60_in.shape[0] * 6)
        gw = min(gw, triple.lr60_in.shape[1] * 6)
    return gh - patch_size, gw - patch_size


def _check_patch_size(triples: Sequence[TrainingTriple], patch_size: int):
    if patch_size < 12 or patch_size % 6 != 0:
        raise PatchTooLarge(f"patch_size must be >= 12 and divisible by 6, got {patch_size}")
    for t in triples:
        mh, mw = _max_origin(t, patch_size)
        if mh < 0 or mw < 0:
            raise PatchTooLarge(
                f"patch {patch_size} exceeds usable extent of scene {t.scene_id!r} "
                f"(gt {t.gt.shape})"
            )


def _plan_windows(
    triples: Sequence[TrainingTriple], patch_size: int, count: int, seed, epoch: int = 0
) -> np.ndarray:
    """Stratified window list [count, 3] of (scene_idx, row0, col0) on the gt grid.

    Origins are multiples of 6 so the /2 and /6 grids align exactly.
    """
    rng = np.random.default_rng([int(seed), int(epoch), 0x5752])
    n = len(triples)
    scene_idx = np.concatenate([
        rng.permutation(n),
        rng.integers(0, n, size=max(count - n, 0)),
    ])[:count]
    scene_idx = rng.permutation(scene_idx)
    windows = np.empty((count, 3), dtype=np.int64)
    windows[:, 0] = scene_idx
    align = 6
    for i, s in enumerate(scene_idx):
        mh, mw = _max_origin(triples[s], patch_size)
        windows[i, 1] = rng.integers(0, mh // align + 1) * align
        windows[i, 2] = rng.integers(0, mw // align + 1) * align
    return windows


def _cut(triple: TrainingTriple, r0: int, c0: int, patch_size: int):
    p = patch_size
    gt = triple.gt.pixels[:, r0:r0 + p, c0:c0 + p]
    hr = triple.hr_in.pixels[:, r0:r0 + p, c0:c0 + p]
    lr = triple.lr_in.pixels[:, r0 // 2:(r0 + p) // 2, c0 // 2:(c0 + p) // 2]
    lr60 = None
    if triple.lr60_in is not None:
        lr60 = triple.lr60_in.pixels[:, r0 // 6:(r0 + p) // 6, c0 // 6:(c0 + p) // 6]
    return lr, hr, gt, lr60


def sample_patches(
    triples: Sequence[TrainingTriple],
    patch_size: int,
    count: int,
    seed: int,
    batch_size: int = 128,
    epoch: int = 0,
    workers: int = 1,
) -> Iterator[PatchBatch]:
    """Yield ``ceil(count / batch_size)`` batches of aligned random windows.

    Deterministic given (seed, epoch) regardless of ``workers``; every scene
    appears at least once when ``count >= len(triples)``.
    """
    if not triples:
        raise DataExhausted("no training triples supplied")
    _check_patch_size(triples, patch_size)
    mode = triples[0].mode
    windows = _plan_windows(triples, patch_size, count, seed, epoch)

    def build(row) -> tuple:
        s, r0, c0 = (int(v) for v in row)
        return _cut(triples[s], r0, c0, patch_size)

    def emit(parts: list[tuple]) -> PatchBatch:
        lr = np.stack([p[0] for p in parts])
        hr = np.stack([p[1] for p in parts])
        gt = np.stack([p[2] for p in parts])
        lr60 = np.stack([p[3] for p in parts]) if parts[0][3] is not None else None
        return PatchBatch(lr, hr, gt, patch_size, mode, lr60)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(build, windows))
    else:
        parts = [build(row) for row in windows]
    for start in range(0, count, batch_size):
        yield emit(parts[start:start + batch_size])


# ---------------------------------------------------------------------------
# triple persistence (written by `prepare`, read by the trainer)


def save_triple(triple: TrainingTriple, path) -> None:
    """Write a triple as raw-tensor members under directory ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"mode": triple.mode.name.lower(), "scene_id": triple.scene_id}
    for name in TRIPLE_MEMBERS:
        group = getattr(triple, name)
        if group is None:
            continue
        save_band_group(group, root / f"{name}.s2sr", format="raw")
    (root / "triple.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_triple(path) -> TrainingTriple:
    root = Path(path)
    meta = json.loads((root / "triple.json").read_text())
    mode = ScalingMode.parse(meta["mode"])
    kwargs = {}
    for name in TRIPLE_MEMBERS:
        member = root / f"{name}.s2sr"
        if member.exists():
            kwargs[name] = load_band_group(member, format="raw")
    return TrainingTriple(mode=mode, scene_id=meta["scene_id"], **kwargs)
