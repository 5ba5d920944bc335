"""Command-line entry point: prepare | train | super-resolve | evaluate.

One declarative JSON config file drives an experiment; a few flags override
it (``--mode``, ``--seed``, ``--out``, ``--ablation-content-only``). Every
subcommand is deterministic given the same config and seed. Errors exit with
code 1 and a single machine-parsable line ``error: <code>: <message>`` on
stderr. ``S2SR_NUM_WORKERS`` caps data-pipeline workers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degradation import TrainingTriple, degrade_scene
from .dataset import load_triple, save_triple
from .discriminator import DiscriminatorConfig
from .errors import IoFailure, MissingLr60, S2SRError, ShapeMismatch
from .generator import DEFAULT_TILE, GeneratorConfig, super_resolve
from .losses import LossWeights
from .metrics import MetricsReport, evaluate, render_comparison
from .raster_io import (
    BandGroup,
    ScalingMode,
    load_band_group,
    load_scene,
    save_band_group,
    save_scene,
)
from .resampling import ResampleSpec, upsample_bicubic
from .synthetic import make_scene
from .trainer import TrainConfig, load_checkpoint, train


@dataclass
class RunConfig:
    """Union of all sub-configs, loaded from one JSON file."""

    mode: ScalingMode = ScalingMode.X2
    seed: int = 0
    out_dir: Path = Path("runs/default")
    scenes: list[dict] = field(default_factory=list)
    split: dict = field(default_factory=lambda: {"train": 1, "val": 0, "test": 0})
    blur_sigma: float = 0.5
    generator: dict = field(default_factory=dict)
    discriminator: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, overrides: argparse.Namespace | None = None) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        cfg = cls(
            mode=ScalingMode.parse(raw.get("mode", "x2")),
            seed=int(raw.get("seed", 0)),
            out_dir=Path(raw.get("out_dir", "runs/default")),
            scenes=list(raw.get("scenes", [])),
            split=dict(raw.get("split", {"train": 1, "val": 0, "test": 0})),
            blur_sigma=float(raw.get("degradation", {}).get("blur_sigma", 0.5)),
            generator=dict(raw.get("generator", {})),
            discriminator=dict(raw.get("discriminator", {})),
            train=dict(raw.get("train", {})),
        )
        if overrides is not None:
            if getattr(overrides, "mode", None):
                cfg.mode = ScalingMode.parse(overrides.mode)
            if getattr(overrides, "seed", None) is not None:
                cfg.seed = overrides.seed
            if getattr(overrides, "out", None):
                cfg.out_dir = Path(overrides.out)
        return cfg

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(mode=self.mode, **self.generator)

    def discriminator_config(self, patch_size: int) -> DiscriminatorConfig:
        d = dict(self.discriminator)
        d.setdefault("input_bands", self.mode.out_bands)
        d.setdefault("patch_size", patch_size)
        return DiscriminatorConfig(**d)

    def train_config(self, ablation: bool = False) -> TrainConfig:
        t = dict(self.train)
        weights = LossWeights(**t.pop("loss_weights", {}))
        workers = int(t.pop("workers", 1))
        env_cap = os.environ.get("S2SR_NUM_WORKERS")
        if env_cap is not None:
            workers = max(1, min(workers, int(env_cap)))
        return TrainConfig(
            mode=self.mode, seed=self.seed, loss_weights=weights,
            ablation_content_only=ablation or bool(t.pop("ablation_content_only", False)),
            workers=workers, **t,
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    cfg = RunConfig.load(args.config, args)
    if not cfg.scenes:
        raise IoFailure("config lists no scenes to prepare")
    spec = ResampleSpec(factor=cfg.mode.factor, blur_sigma=cfg.blur_sigma)
    triple_dir = cfg.out_dir / "triples"
    triple_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for sc in cfg.scenes:
        scene = load_scene(sc["path"], sc.get("manifest", "scene.json"))
        if cfg.mode is ScalingMode.X6 and not scene.has_lr60:
            raise MissingLr60(f"scene {scene.scene_id!r} has no 60 m bands")
        triple = degrade_scene(scene, cfg.mode, spec)
        tpath = triple_dir / scene.scene_id
        save_triple(triple, tpath)
        entries.append({
            "scene_id": scene.scene_id,
            "path": str(tpath.relative_to(triple_dir)),
            "gt_shape": list(triple.gt.pixels.shape),
        })

    rng = np.random.default_rng([cfg.seed, 0x505245])
    order = rng.permutation(len(entries))
    counts = _split_counts(cfg.split, len(entries))
    roles = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    for pos, idx in enumerate(order):
        entries[idx]["role"] = roles[pos]

    manifest = {
        "mode": cfg.mode.name.lower(),
        "seed": cfg.seed,
        "blur_sigma": cfg.blur_sigma,
        "triples": entries,
    }
    (triple_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    print(f"prepared {len(entries)} triples -> {triple_dir}")
    return 0


def _split_counts(split: dict, n: int) -> tuple[int, int, int]:
    w = [max(0.0, float(split.get(k, 0))) for k in ("train", "val", "test")]
    total = sum(w)
    if total <= 0:
        return n, 0, 0
    counts = [int(n * v / total) for v in w]
    counts[0] += n - sum(counts)
    return counts[0], counts[1], counts[2]


def _load_split(triple_dir: Path) -> tuple[dict, list[TrainingTriple], list[TrainingTriple]]:
    mpath = triple_dir / "manifest.json"
    if not mpath.exists():
        raise IoFailure(f"no prepared manifest at {mpath}; run `s2sr prepare` first")
    manifest = json.loads(mpath.read_text())
    train_triples, val_triples = [], []
    for e in manifest["triples"]:
        triple = load_triple(triple_dir / e["path"])
        if e["role"] == "train":
            train_triples.append(triple)
        elif e["role"] == "val":
            val_triples.append(triple)
    return manifest, train_triples, val_triples


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, args)
    triple_dir = cfg.out_dir / "triples"
    manifest, train_triples, val_triples = _load_split(triple_dir)
    if manifest["mode"] != cfg.mode.name.lower():
        raise ShapeMismatch(
            f"prepared triples are {manifest['mode']}, config requests {cfg.mode.name.lower()}"
        )
    t_cfg = cfg.train_config(ablation=args.ablation_content_only)
    g_cfg = cfg.generator_config()
    d_cfg = None if t_cfg.ablation_content_only else cfg.discriminator_config(t_cfg.patch_size)

    ckpt_dir = cfg.out_dir / "checkpoints"
    result = train(
        train_triples, g_cfg, d_cfg, t_cfg, val_triples=val_triples,
        checkpoint_dir=ckpt_dir, resume_from=args.resume, verbose=not args.quiet,
    )
    (cfg.out_dir / "trainlog.ndjson").write_text(result.log.to_ndjson())
    print(f"trained {result.log.g_updates} generator steps -> {ckpt_dir}")
    return 0


def cmd_super_resolve(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    model = loaded.build_generator()
    scene_path = Path(args.scene)
    if scene_path.is_dir():
        scene = load_scene(scene_path, args.manifest or "scene.json")
    else:
        scene = load_scene(scene_path.parent, scene_path.name)
    sr = super_resolve(model, scene, tile=args.tile)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_band_group(sr, out, format=args.format)
    for i, band in enumerate(sr.bands):
        plane = sr.pixels[i]
        print(f"{band}: mean={plane.mean():.2f} std={plane.std():.2f} "
              f"min={plane.min():.2f} max={plane.max():.2f}")
    print(f"wrote {out}")
    return 0


def cmd_evaluate(args) -> int:
    gt = load_band_group(args.gt)
    methods: list[tuple[str, BandGroup]] = []
    if args.sr:
        methods.append(("sr", load_band_group(args.sr)))
    for spec_str in args.methods or []:
        if "=" not in spec_str:
            raise ValueError(f"--methods expects NAME=PATH, got {spec_str!r}")
        name, _, path = spec_str.partition("=")
        methods.append((name, load_band_group(path)))
    if args.baseline == "bicubic":
        if not args.lr_input:
            raise ValueError("--baseline bicubic needs --lr-input with the LR raster")
        lr = load_band_group(args.lr_input)
        factor = gt.shape[0] // max(lr.shape[0], 1)
        if factor < 1 or (lr.shape[0] * factor, lr.shape[1] * factor) != gt.shape:
            raise ShapeMismatch(
                f"LR shape {lr.shape} does not divide ground truth shape {gt.shape}"
            )
        methods.append(("bicubic", upsample_bicubic(lr, factor)))
    if not methods:
        raise ValueError("nothing to evaluate: give --sr, --methods or --baseline")

    reports = []
    for name, group in methods:
        if group.bands != gt.bands and set(group.bands) == set(gt.bands):
            group = group.select(gt.bands)
        reports.append(evaluate(group, gt, window=args.window, method_name=name))
    table = render_comparison(reports)
    print(table)
    if args.per_band:
        print()
        print(reports[0].render_table().splitlines()[0])
        for rep in sorted(reports, key=lambda r: r.aggregate["rmse"]):
            print(rep.render_table().splitlines()[1])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            name = rep.meta["method_name"]
            (out / f"report_{name}.json").write_text(rep.to_json())
            (out / f"per_band_{name}.txt").write_text(rep.render_table() + "\n")
        (out / "comparison.txt").write_text(table + "\n")
        print(f"wrote reports -> {out}")
    return 0


def cmd_make_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene_list = []
    for i in range(args.scenes):
        scene = make_scene(f"demo{i:03d}", size=args.size, seed=args.seed + i)
        sdir = out / scene.scene_id
        save_scene(scene, sdir, format="raw")
        scene_list.append({"path": str(sdir), "manifest": "scene.json"})
    print(json.dumps({"scenes": scene_list}, indent=1))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2sr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--mode", choices=["x2", "x6"], help="override scaling mode")
    common.add_argument("--seed", type=int, help="override seed")
    common.add_argument("--out", help="override output directory")

    p = sub.add_parser("prepare", parents=[common], help="degrade scenes into training triples")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train generator (and discriminator)")
    p.add_argument("--ablation-content-only", action="store_true",
                   help="train on MAE alone, no discriminator")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("super-resolve", help="apply a trained model to a scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True, help="scene directory or manifest path")
    p.add_argument("--manifest", help="manifest name inside the scene directory")
    p.add_argument("--out", required=True, help="output raster path")
    p.add_argument("--format", choices=["geotiff", "raw"], default="raw")
    p.add_argument("--tile", type=int, default=DEFAULT_TILE)
    p.set_defaults(func=cmd_super_resolve)

    p = sub.add_parser("evaluate", help="score SR rasters against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth raster")
    p.add_argument("--sr", help="super-resolved raster to score")
    p.add_argument("--methods", nargs="*", metavar="NAME=PATH",
                   help="additional rasters to score as comparison rows")
    p.add_argument("--baseline", choices=["bicubic"],
                   help="also score an interpolation baseline computed from --lr-input")
    p.add_argument("--lr-input", help="LR raster for the baseline")
    p.add_argument("--window", type=int, default=8, help="UIQ window size")
    p.add_argument("--per-band", action="store_true",
                   help="also print per-band RMSE rows")
    p.add_argument("--out", help="directory for JSON reports and the tables")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("make-demo", help="generate synthetic demo scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--size", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except S2SRError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, NotImplementedError) as exc:
        print(f"error: invalid-argument: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
