"""End-to-end CLI smoke tests on small synthetic data."""

import json
from pathlib import Path

import numpy as np
import pytest

from s2sr.cli import main
from s2sr.raster_io import LR20_BANDS, load_band_group, save_scene
from s2sr.synthetic import make_scene


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Scenes on disk plus a small experiment config."""
    root = tmp_path_factory.mktemp("ws")
    scenes = []
    for i in range(4):
        scene = make_scene(f"demo{i:03d}", size=48, seed=i)
        sdir = root / "data" / scene.scene_id
        save_scene(scene, sdir, format="raw")
        scenes.append({"path": str(sdir), "manifest": "scene.json"})
    config = {
        "mode": "x2",
        "seed": 0,
        "out_dir": str(root / "run"),
        "scenes": scenes,
        "split": {"train": 2, "val": 1, "test": 1},
        "generator": {"n_res_blocks": 2, "n_filters": 8},
        "discriminator": {"filters": [8, 8, 8]},
        "train": {"batch_size": 4, "epochs": 2, "steps_per_epoch": 3, "patch_size": 12},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=1))
    return root, cfg_path


def test_prepare_is_deterministic(workspace):
    root, cfg = workspace
    assert main(["prepare", "--config", str(cfg)]) == 0
    manifest_path = root / "run" / "triples" / "manifest.json"
    first = manifest_path.read_bytes()
    assert main(["prepare", "--config", str(cfg)]) == 0
    assert manifest_path.read_bytes() == first
    manifest = json.loads(first)
    roles = sorted(e["role"] for e in manifest["triples"])
    assert roles == ["test", "train", "train", "val"]
    assert all((root / "run" / "triples" / e["path"] / "gt.s2sr").exists()
               for e in manifest["triples"])


def test_train_writes_checkpoints_and_log(workspace):
    root, cfg = workspace
    assert main(["train", "--config", str(cfg), "--quiet"]) == 0
    assert (root / "run" / "checkpoints" / "final.s2ck").exists()
    assert (root / "run" / "checkpoints" / "best.s2ck").exists()
    log_lines = (root / "run" / "trainlog.ndjson").read_text().splitlines()
    kinds = [json.loads(l)["kind"] for l in log_lines]
    assert kinds[0] == "meta" and kinds[-1] == "summary"
    assert kinds.count("step") == 6
    assert kinds.count("val") == 2


def test_train_ablation_writes_generator_only_checkpoint(workspace, tmp_path):
    root, cfg_path = workspace
    cfg = json.loads(cfg_path.read_text())
    cfg["out_dir"] = str(tmp_path / "ablation")
    abl_cfg = tmp_path / "abl.json"
    abl_cfg.write_text(json.dumps(cfg))
    assert main(["prepare", "--config", str(abl_cfg)]) == 0
    assert main(["train", "--config", str(abl_cfg), "--ablation-content-only",
                 "--quiet"]) == 0
    from s2sr.trainer import load_checkpoint

    ck = load_checkpoint(Path(cfg["out_dir"]) / "checkpoints" / "final.s2ck")
    assert ck.d_config is None
    assert ck.build_discriminator() is None


def test_train_without_prepare_fails_cleanly(workspace, tmp_path, capsys):
    root, cfg_path = workspace
    cfg = json.loads(cfg_path.read_text())
    cfg["out_dir"] = str(tmp_path / "nothing")
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(bad_cfg), "--quiet"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: io-failure:")
    assert "\n" == err[err.index("\n"):]  # a single line


def test_super_resolve_and_evaluate(workspace, capsys):
    root, cfg = workspace
    scene_dir = root / "data" / "demo003"
    sr_path = root / "sr.s2sr"
    assert main([
        "super-resolve", "--checkpoint", str(root / "run" / "checkpoints" / "final.s2ck"),
        "--scene", str(scene_dir), "--out", str(sr_path),
    ]) == 0
    sr = load_band_group(sr_path)
    assert sr.bands == LR20_BANDS
    assert sr.shape == (48, 48)
    out = capsys.readouterr().out
    assert all(band in out for band in LR20_BANDS)

    # score it against the native 20 m bands (identity protocol smoke test)
    gt_path = scene_dir / "lr20.s2sr"
    lr_small = root / "lr_small.s2sr"
    from s2sr.degradation import degrade_scene
    from s2sr.raster_io import ScalingMode, load_scene, save_band_group

    triple = degrade_scene(load_scene(scene_dir, "scene.json"), ScalingMode.X2)
    save_band_group(triple.lr_in, lr_small)
    report_dir = root / "reports"
    assert main([
        "evaluate", "--gt", str(gt_path),
        "--methods", f"model={sr_path}",
        "--baseline", "bicubic", "--lr-input", str(lr_small),
        "--out", str(report_dir),
    ]) == 1  # sr is 48x48 vs gt 24x24 -> shape mismatch reported cleanly
    err = capsys.readouterr().err
    assert err.startswith("error: shape-mismatch:")


def test_evaluate_comparison_table(workspace, capsys, tmp_path):
    root, _ = workspace
    scene = make_scene("eval", size=48, seed=9)
    gt_path = tmp_path / "gt.s2sr"
    from s2sr.raster_io import BandGroup, save_band_group

    save_band_group(scene.lr20, gt_path)
    near = BandGroup(scene.lr20.bands, scene.lr20.pixels + 2.0, scene.lr20.gsd_m)
    far = BandGroup(scene.lr20.bands, scene.lr20.pixels + 40.0, scene.lr20.gsd_m)
    near_path, far_path = tmp_path / "near.s2sr", tmp_path / "far.s2sr"
    save_band_group(near, near_path)
    save_band_group(far, far_path)
    out_dir = tmp_path / "rep"
    assert main([
        "evaluate", "--gt", str(gt_path),
        "--methods", f"near={near_path}", f"far={far_path}",
        "--out", str(out_dir),
    ]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.strip()]
    assert lines[0].split() == ["Method", "RMSE", "SRE", "SAM", "UIQ"]
    assert lines[1].startswith("near") and lines[2].startswith("far")
    assert (out_dir / "report_near.json").exists()
    assert (out_dir / "comparison.txt").exists()


def test_evaluate_missing_input(capsys):
    assert main(["evaluate", "--gt", "/does/not/exist.s2sr"]) == 1
    assert capsys.readouterr().err.startswith("error: io-failure:")


def test_super_resolve_missing_checkpoint(workspace, capsys):
    root, _ = workspace
    assert main([
        "super-resolve", "--checkpoint", str(root / "missing.s2ck"),
        "--scene", str(root / "data" / "demo000"), "--out", str(root / "x.s2sr"),
    ]) == 1
    assert capsys.readouterr().err.startswith("error: io-failure:")


def test_make_demo(tmp_path, capsys):
    assert main(["make-demo", "--out", str(tmp_path / "demo"), "--scenes", "2",
                 "--size", "24", "--seed", "3"]) == 0
    listing = json.loads(capsys.readouterr().out)
    assert len(listing["scenes"]) == 2
    assert (tmp_path / "demo" / "demo000" / "scene.json").exists()
