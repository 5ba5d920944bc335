"""Alternating adversarial optimization with checkpointing and logging.

Each iteration samples one mini-batch, applies one discriminator update on
ground-truth vs. (detached) generated patches, then one generator update on
content + weighted adversarial loss. The content-only ablation skips the
discriminator entirely. Training is a deterministic function of the configs
and data: sampling is stateless per (seed, epoch), so a run can be resumed
from a checkpoint bit-identically.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import checkpoint as ckpt
from .dataset import PatchBatch, _max_origin, sample_patches
from .degradation import TrainingTriple
from .discriminator import Discriminator, DiscriminatorConfig, build_discriminator, d_forward
from .errors import DataExhausted, NonFiniteLoss
from .generator import Generator, GeneratorConfig, build_generator, super_resolve_triple
from .losses import LossWeights, adversarial_loss_g, content_loss, discriminator_loss, generator_total_loss
from .metrics import evaluate
from .raster_io import DN_SCALE, ScalingMode

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults are sized for a full-corpus
    run (batch 128 over 56 epochs, adam at 1e-4 for both networks)."""

    mode: ScalingMode = ScalingMode.X2
    batch_size: int = 128
    epochs: int = 56
    steps_per_epoch: int | None = None
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    seed: int = 0
    patch_size: int = 36
    loss_weights: LossWeights = field(default_factory=LossWeights)
    ablation_content_only: bool = False
    g_pretrain_steps: int = 0
    checkpoint_every: int = 0
    workers: int = 1
    augment: bool = False  # reserved; no augmentation is applied

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise ValueError("learning rates must be positive")
        if self.augment:
            raise NotImplementedError("data augmentation is reserved but not implemented")

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode.name.lower(),
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "steps_per_epoch": self.steps_per_epoch,
            "lr_g": self.lr_g,
            "lr_d": self.lr_d,
            "seed": self.seed,
            "patch_size": self.patch_size,
            "loss_weights": {
                "lambda_adv": self.loss_weights.lambda_adv,
                "eps": self.loss_weights.eps,
                "non_saturating": self.loss_weights.non_saturating,
            },
            "ablation_content_only": self.ablation_content_only,
            "g_pretrain_steps": self.g_pretrain_steps,
            "checkpoint_every": self.checkpoint_every,
            "workers": self.workers,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["mode"] = ScalingMode.parse(d["mode"])
        d["loss_weights"] = LossWeights(**d.get("loss_weights", {}))
        d.pop("augment", None)
        return cls(**d)


@dataclass
class TrainLog:
    """Per-step loss records, per-epoch validation records, update counters."""

    meta: dict = field(default_factory=dict)
    steps: list[dict] = field(default_factory=list)
    vals: list[dict] = field(default_factory=list)
    d_updates: int = 0
    g_updates: int = 0

    def record_step(self, rec: dict):
        for key, value in rec.items():
            if key != "step" and not math.isfinite(value):
                raise NonFiniteLoss(
                    f"non-finite {key} at step {rec['step']}", step=rec["step"], record=rec
                )
        self.steps.append(rec)

    def to_ndjson(self) -> str:
        lines = [json.dumps({"kind": "meta", **self.meta}, sort_keys=True)]
        lines += [json.dumps({"kind": "step", **r}, sort_keys=True) for r in self.steps]
        lines += [json.dumps({"kind": "val", **r}, sort_keys=True) for r in self.vals]
        lines.append(json.dumps(
            {"kind": "summary", "d_updates": self.d_updates, "g_updates": self.g_updates},
            sort_keys=True,
        ))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_ndjson(cls, text: str) -> "TrainLog":
        log = cls()
        for line in text.splitlines():
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "meta":
                log.meta = rec
            elif kind == "step":
                log.steps.append(rec)
            elif kind == "val":
                log.vals.append(rec)
            elif kind == "summary":
                log.d_updates = rec["d_updates"]
                log.g_updates = rec["g_updates"]
        return log


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator | None
    log: TrainLog
    best_val_mae: float | None = None


# ---------------------------------------------------------------------------
# checkpoint wrappers


@dataclass
class Checkpoint:
    g_config: GeneratorConfig
    g_state: dict
    d_config: DiscriminatorConfig | None
    d_state: dict | None
    opt_g_state: dict | None
    opt_d_state: dict | None
    train_config: dict | None
    step: int
    epoch: int
    step_in_epoch: int

    def build_generator(self) -> Generator:
        model = Generator(self.g_config)
        model.load_state_dict(self.g_state)
        return model

    def build_discriminator(self) -> Discriminator | None:
        if self.d_config is None:
            return None
        model = Discriminator(self.d_config)
        model.load_state_dict(self.d_state)
        return model


def save_checkpoint(
    path,
    generator: Generator,
    discriminator: Discriminator | None = None,
    optimizer_g: torch.optim.Optimizer | None = None,
    optimizer_d: torch.optim.Optimizer | None = None,
    train_config: TrainConfig | None = None,
    step: int = 0,
    epoch: int = 0,
    step_in_epoch: int = 0,
) -> None:
    sections: dict = {
        "generator": {
            "config": generator.config.to_dict(),
            "state": dict(generator.state_dict()),
        },
        "position": {"step": step, "epoch": epoch, "step_in_epoch": step_in_epoch},
    }
    if discriminator is not None:
        sections["discriminator"] = {
            "config": discriminator.config.to_dict(),
            "state": dict(discriminator.state_dict()),
        }
    if optimizer_g is not None:
        sections["optimizer_g"] = optimizer_g.state_dict()
    if optimizer_d is not None:
        sections["optimizer_d"] = optimizer_d.state_dict()
    if train_config is not None:
        sections["train_config"] = train_config.to_dict()
    ckpt.save_container(path, sections)


def load_checkpoint(path) -> Checkpoint:
    sections = ckpt.load_container(path)
    g_sec = sections["generator"]
    d_sec = sections.get("discriminator")
    pos = sections.get("position", {})
    return Checkpoint(
        g_config=GeneratorConfig.from_dict(g_sec["config"]),
        g_state=g_sec["state"],
        d_config=DiscriminatorConfig.from_dict(d_sec["config"]) if d_sec else None,
        d_state=d_sec["state"] if d_sec else None,
        opt_g_state=sections.get("optimizer_g"),
        opt_d_state=sections.get("optimizer_d"),
        train_config=sections.get("train_config"),
        step=int(pos.get("step", 0)),
        epoch=int(pos.get("epoch", 0)),
        step_in_epoch=int(pos.get("step_in_epoch", 0)),
    )


# ---------------------------------------------------------------------------
# training loop


def _available_patches(triples: Sequence[TrainingTriple], patch_size: int) -> int:
    total = 0
    for t in triples:
        mh, mw = _max_origin(t, patch_size)
        total += (mh // 6 + 1) * (mw // 6 + 1)
    return total


def _to_torch(batch: PatchBatch, scale: float):
    def conv(a):
        return torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32) / scale)

    lr = conv(batch.lr_patches)
    hr = conv(batch.hr_patches)
    gt = conv(batch.gt_patches)
    if batch.lr60_patches is None:
        return lr, hr, gt
    return (lr, conv(batch.lr60_patches)), hr, gt


def _validate(
    generator: Generator, val_triples: Sequence[TrainingTriple], epoch: int, step: int
) -> dict:
    maes, rmses, sams, uiqs = [], [], [], []
    for t in val_triples:
        sr = super_resolve_triple(generator, t)
        rep = evaluate(sr, t.gt)
        maes.append(float(np.mean(np.abs(sr.pixels.astype(np.float64) - t.gt.pixels))) / DN_SCALE)
        rmses.append(rep.aggregate["rmse"])
        sams.append(rep.aggregate["sam_deg"])
        uiqs.append(rep.aggregate["uiq"])
    return {
        "epoch": epoch,
        "step": step,
        "val_mae": float(np.mean(maes)),
        "val_rmse": float(np.mean(rmses)),
        "val_sam_deg": float(np.mean(sams)),
        "val_uiq": float(np.mean(uiqs)),
    }


def train(
    triples: Sequence[TrainingTriple],
    g_cfg: GeneratorConfig,
    d_cfg: DiscriminatorConfig | None,
    t_cfg: TrainConfig,
    val_triples: Sequence[TrainingTriple] = (),
    checkpoint_dir=None,
    resume_from=None,
    verbose: bool = False,
) -> TrainResult:
    """Run the full optimization; returns final params and the complete log.

    Deterministic given identical inputs: repeated runs produce bit-identical
    parameters and logs. ``resume_from`` restores models, optimizer state and
    the sampling position so a resumed run matches an uninterrupted one.
    """
    if not triples:
        raise DataExhausted("no training triples supplied")
    gan = not t_cfg.ablation_content_only
    if gan and d_cfg is None:
        raise ValueError("adversarial training needs a discriminator config")

    ss = np.random.SeedSequence(t_cfg.seed)
    g_seed, d_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))

    start_epoch = start_step_in_epoch = global_step = 0
    opt_g_state = opt_d_state = None
    if resume_from is not None:
        loaded = load_checkpoint(resume_from)
        generator = loaded.build_generator()
        discriminator = loaded.build_discriminator()
        opt_g_state, opt_d_state = loaded.opt_g_state, loaded.opt_d_state
        start_epoch, start_step_in_epoch = loaded.epoch, loaded.step_in_epoch
        global_step = loaded.step
    else:
        generator = build_generator(g_cfg, seed=g_seed)
        discriminator = build_discriminator(d_cfg, seed=d_seed) if gan else None

    opt_g = torch.optim.Adam(generator.parameters(), lr=t_cfg.lr_g, betas=ADAM_BETAS, eps=ADAM_EPS)
    if opt_g_state is not None:
        opt_g.load_state_dict(opt_g_state)
    opt_d = None
    if discriminator is not None:
        opt_d = torch.optim.Adam(discriminator.parameters(), lr=t_cfg.lr_d,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)
        if opt_d_state is not None:
            opt_d.load_state_dict(opt_d_state)

    steps_per_epoch = t_cfg.steps_per_epoch
    if steps_per_epoch is None:
        steps_per_epoch = max(1, -(-_available_patches(triples, t_cfg.patch_size) // t_cfg.batch_size))

    log = TrainLog(meta={
        "mode": t_cfg.mode.name.lower(),
        "seed": t_cfg.seed,
        "batch_size": t_cfg.batch_size,
        "epochs": t_cfg.epochs,
        "steps_per_epoch": steps_per_epoch,
        "ablation_content_only": t_cfg.ablation_content_only,
        "n_train_triples": len(triples),
        "n_val_triples": len(val_triples),
    })
    weights = t_cfg.loss_weights
    best_val = math.inf
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def dump(name: str, epoch: int, step_in_epoch: int):
        if ckpt_dir is None:
            return None
        path = ckpt_dir / name
        save_checkpoint(
            path, generator, discriminator, opt_g, opt_d, t_cfg,
            step=global_step, epoch=epoch, step_in_epoch=step_in_epoch,
        )
        return path

    generator.train()
    if discriminator is not None:
        discriminator.train()

    for epoch in range(start_epoch, t_cfg.epochs):
        batches = sample_patches(
            triples, t_cfg.patch_size, count=steps_per_epoch * t_cfg.batch_size,
            seed=t_cfg.seed, batch_size=t_cfg.batch_size, epoch=epoch,
            workers=t_cfg.workers,
        )
        skip = start_step_in_epoch if epoch == start_epoch else 0
        for step_in_epoch, batch in enumerate(batches):
            if step_in_epoch < skip:
                continue
            lr, hr, gt = _to_torch(batch, DN_SCALE)
            rec: dict = {"step": global_step}

            adversarial = gan and global_step >= t_cfg.g_pretrain_steps
            if adversarial:
                opt_d.zero_grad(set_to_none=True)
                with torch.no_grad():
                    fake_detached = generator(lr, hr)
                d_real = d_forward(discriminator, gt, train_mode=True)
                d_fake = d_forward(discriminator, fake_detached, train_mode=True)
                d_loss = discriminator_loss(d_real, d_fake, eps=weights.eps)
                d_loss.backward()
                opt_d.step()
                log.d_updates += 1
                rec.update(
                    d_loss=float(d_loss.detach()),
                    d_real_mean=float(d_real.detach().mean()),
                    d_fake_mean=float(d_fake.detach().mean()),
                )

            opt_g.zero_grad(set_to_none=True)
            fake = generator(lr, hr)
            d_fake_g = None
            if adversarial:
                d_fake_g = d_forward(discriminator, fake, train_mode=True)
            g_loss = generator_total_loss(fake, gt, d_fake_g, weights)
            g_loss.backward()
            opt_g.step()
            log.g_updates += 1
            rec["g_content"] = float(content_loss(fake.detach(), gt))
            if d_fake_g is not None:
                rec["g_adv"] = float(adversarial_loss_g(
                    d_fake_g.detach(), eps=weights.eps, non_saturating=weights.non_saturating
                ))
            try:
                log.record_step(rec)
            except NonFiniteLoss:
                dump("nonfinite_dump.s2ck", epoch, step_in_epoch)
                raise
            global_step += 1

            if verbose and global_step % 100 == 0:
                print(f"[train] step {global_step} {rec}", file=sys.stderr)
            if t_cfg.checkpoint_every and global_step % t_cfg.checkpoint_every == 0:
                dump("latest.s2ck", epoch, step_in_epoch + 1)

        if val_triples:
            generator.eval()
            val_rec = _validate(generator, val_triples, epoch, global_step)
            generator.train()
            log.vals.append(val_rec)
            if verbose:
                print(f"[train] epoch {epoch} {val_rec}", file=sys.stderr)
            if val_rec["val_mae"] < best_val:
                best_val = val_rec["val_mae"]
                dump("best.s2ck", epoch + 1, 0)

    generator.eval()
    if discriminator is not None:
        discriminator.eval()
    dump("final.s2ck", t_cfg.epochs, 0)
    return TrainResult(
        generator=generator,
        discriminator=discriminator,
        log=log,
        best_val_mae=None if math.isinf(best_val) else best_val,
    )
