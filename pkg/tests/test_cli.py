"""CLI subcommands: artifacts, exit codes, determinism."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from promptenh import imageio
from promptenh.cli import main
from promptenh.config import EnhancerConfig, TrainConfig
from promptenh.network import Enhancer
from promptenh.params import load_checkpoint, save_checkpoint
from promptenh.train import generate_toy_images


@pytest.fixture
def runner():
    return CliRunner()


def small_cfg(**kw):
    base = dict(base_channels=4, prompt_h=4, prompt_w=4, prompt_channels=32,
                splits=2, reduction=4)
    base.update(kw)
    return EnhancerConfig(**base)


def write_png(path, size=16, seed=0):
    imageio.write_image(path, generate_toy_images(1, size, seed=seed)[0])
    return path


def model_artifacts(tmp_path, seed=0):
    cfg = small_cfg()
    cfg_path = tmp_path / "config.json"
    cfg.save(cfg_path)
    ckpt = tmp_path / "model.bin"
    save_checkpoint(Enhancer(cfg, seed=seed).store, ckpt)
    return cfg_path, ckpt


# -- degrade ------------------------------------------------------------------------

def test_degrade_single_image(runner, tmp_path):
    src = write_png(tmp_path / "in.png")
    out = tmp_path / "out.png"
    res = runner.invoke(main, ["degrade", str(src), str(out), "--kind", "dark",
                               "--gamma", "2.0"])
    assert res.exit_code == 0, res.output
    rec = json.loads(res.output.strip().splitlines()[-1])
    assert rec["kind"] == "dark" and rec["params"]["gamma"] == 2.0
    got = imageio.read_image(out)
    want = imageio.read_image(src) ** 2.0
    assert np.abs(got - want).max() <= 1.0 / 255.0


def test_degrade_gamma_one_is_identity(runner, tmp_path):
    src = write_png(tmp_path / "in.png")
    out = tmp_path / "out.png"
    res = runner.invoke(main, ["degrade", str(src), str(out), "--kind", "dark",
                               "--gamma", "1.0"])
    assert res.exit_code == 0
    np.testing.assert_array_equal(out.read_bytes(), src.read_bytes())


def test_degrade_missing_input_exit_2(runner, tmp_path):
    res = runner.invoke(main, ["degrade", str(tmp_path / "nope.png"),
                               str(tmp_path / "o.png"), "--kind", "fog"])
    assert res.exit_code == 2


def test_degrade_bad_parameter_exit_2(runner, tmp_path):
    src = write_png(tmp_path / "in.png")
    res = runner.invoke(main, ["degrade", str(src), str(tmp_path / "o.png"),
                               "--kind", "fog", "--i", "12"])
    assert res.exit_code == 2


def test_degrade_directory_mode_writes_manifest(runner, tmp_path):
    src_dir = tmp_path / "clean"
    src_dir.mkdir()
    for i in range(4):
        write_png(src_dir / f"im{i}.png", seed=i)
    out_dir = tmp_path / "deg"
    res = runner.invoke(main, ["degrade", str(src_dir), str(out_dir),
                               "--kinds", "fog,dark", "--mix", "1.0", "--seed", "3"])
    assert res.exit_code == 0, res.output
    assert (out_dir / "manifest.jsonl").exists()
    assert len(list(out_dir.glob("im*.png"))) == 4
    kinds = [json.loads(l)["kind"] for l in res.output.strip().splitlines()]
    assert set(kinds) <= {"fog", "dark"}


def test_degrade_is_deterministic_under_seed(runner, tmp_path):
    src = write_png(tmp_path / "in.png")
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    for out in (a, b):
        res = runner.invoke(main, ["degrade", str(src), str(out), "--kind", "noise",
                                   "--sigma", "25", "--seed", "7"])
        assert res.exit_code == 0
    assert a.read_bytes() == b.read_bytes()


# -- enhance ------------------------------------------------------------------------

def test_enhance_roundtrip_and_feature_dump(runner, tmp_path):
    cfg_path, ckpt = model_artifacts(tmp_path)
    src = write_png(tmp_path / "in.png")
    out = tmp_path / "out.png"
    feats = tmp_path / "feats"
    res = runner.invoke(main, ["enhance", str(src), str(out), "--checkpoint",
                               str(ckpt), "--config", str(cfg_path),
                               "--dump-features", str(feats)])
    assert res.exit_code == 0, res.output
    assert imageio.read_image(out).shape == (16, 16, 3)
    for level, c in ((3, 32), (2, 16), (1, 8)):
        meta = json.loads((feats / f"level{level}.json").read_text())
        raw = np.frombuffer((feats / f"level{level}.bin").read_bytes(), dtype="<f8")
        assert meta["shape"][1] == c
        assert raw.size == np.prod(meta["shape"])


def test_enhance_zero_final_checkpoint_is_identity(runner, tmp_path):
    cfg = small_cfg(final_zero_init=True)
    cfg_path = tmp_path / "config.json"
    cfg.save(cfg_path)
    ckpt = tmp_path / "model.bin"
    save_checkpoint(Enhancer(cfg, seed=0).store, ckpt)
    src = write_png(tmp_path / "in.png")
    out = tmp_path / "out.png"
    res = runner.invoke(main, ["enhance", str(src), str(out), "--checkpoint",
                               str(ckpt), "--config", str(cfg_path)])
    assert res.exit_code == 0, res.output
    np.testing.assert_array_equal(imageio.read_image(out), imageio.read_image(src))


def test_enhance_missing_checkpoint_exit_2(runner, tmp_path):
    cfg_path, _ = model_artifacts(tmp_path)
    src = write_png(tmp_path / "in.png")
    res = runner.invoke(main, ["enhance", str(src), str(tmp_path / "o.png"),
                               "--checkpoint", str(tmp_path / "missing.bin"),
                               "--config", str(cfg_path)])
    assert res.exit_code == 2


# -- gradcheck ----------------------------------------------------------------------

def test_gradcheck_single_op_passes(runner):
    res = runner.invoke(main, ["gradcheck", "--op", "relu", "--samples", "8"])
    assert res.exit_code == 0, res.output
    assert "relu" in res.output and "[pass]" in res.output


def test_gradcheck_unknown_op_exit_2(runner):
    res = runner.invoke(main, ["gradcheck", "--op", "frobnicate"])
    assert res.exit_code == 2


def test_gradcheck_flip_op_fault_detected(runner):
    res = runner.invoke(main, ["gradcheck", "--op", "gelu", "--flip-op", "gelu",
                               "--samples", "8"])
    assert res.exit_code == 1
    assert "gelu" in res.output and "FAIL" in res.output


def test_gradcheck_impossible_tolerance_exit_1(runner):
    res = runner.invoke(main, ["gradcheck", "--op", "conv2d", "--tol", "1e-12",
                               "--samples", "8"])
    assert res.exit_code == 1


# -- train / report ---------------------------------------------------------------------

def make_training_dir(runner, tmp_path):
    src_dir = tmp_path / "clean"
    src_dir.mkdir()
    for i in range(3):
        write_png(src_dir / f"im{i}.png", seed=i)
    out_dir = tmp_path / "deg"
    res = runner.invoke(main, ["degrade", str(src_dir), str(out_dir),
                               "--kinds", "fog,dark", "--mix", "1.0"])
    assert res.exit_code == 0
    return out_dir / "manifest.jsonl"


def test_train_zero_iters_equals_init(runner, tmp_path):
    manifest = make_training_dir(runner, tmp_path)
    cfg_path = tmp_path / "config.json"
    small_cfg().save(cfg_path)
    ckpt = tmp_path / "out.bin"
    curve = tmp_path / "curve.csv"
    res = runner.invoke(main, ["train", "--manifest", str(manifest), "--config",
                               str(cfg_path), "--iters", "0", "--seed", "0",
                               "--out", str(ckpt), "--curve", str(curve)])
    assert res.exit_code == 0, res.output
    assert curve.read_text().strip() == "iter,loss"
    init = Enhancer(small_cfg(), seed=0).store.state()
    for name, arr in load_checkpoint(ckpt).items():
        np.testing.assert_array_equal(arr, init[name])


def test_train_is_bit_reproducible(runner, tmp_path):
    manifest = make_training_dir(runner, tmp_path)
    cfg_path = tmp_path / "config.json"
    small_cfg().save(cfg_path)
    outs = []
    for tag in ("a", "b"):
        ckpt = tmp_path / f"{tag}.bin"
        res = runner.invoke(main, ["train", "--manifest", str(manifest), "--config",
                                   str(cfg_path), "--iters", "2", "--seed", "9",
                                   "--out", str(ckpt)])
        assert res.exit_code == 0, res.output
        outs.append(ckpt.read_bytes())
    assert outs[0] == outs[1]


def test_train_missing_manifest_exit_2(runner, tmp_path):
    cfg_path = tmp_path / "config.json"
    small_cfg().save(cfg_path)
    res = runner.invoke(main, ["train", "--manifest", str(tmp_path / "no.jsonl"),
                               "--config", str(cfg_path), "--out",
                               str(tmp_path / "o.bin")])
    assert res.exit_code == 2


def test_train_nan_divergence_exit_3(runner, tmp_path):
    manifest = make_training_dir(runner, tmp_path)
    cfg_path = tmp_path / "config.json"
    small_cfg().save(cfg_path)
    # absurd learning rate via train config: loss goes non-finite
    tcfg_path = tmp_path / "train.json"
    TrainConfig(lr=1e12, iters=30, batch=2).save(tcfg_path)
    res = runner.invoke(main, ["train", "--manifest", str(manifest), "--config",
                               str(cfg_path), "--train-config", str(tcfg_path),
                               "--out", str(tmp_path / "o.bin")])
    assert res.exit_code == 3, res.output


def test_report_writes_silhouette_json(runner, tmp_path):
    cfg_path, ckpt = model_artifacts(tmp_path)
    out = tmp_path / "report.json"
    res = runner.invoke(main, ["report", "--checkpoint", str(ckpt), "--config",
                               str(cfg_path), "--kinds", "fog,dark",
                               "--images-per-kind", "2", "--probe-size", "16",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    obj = json.loads(out.read_text())
    assert obj["level"] == 1 and -1.0 <= obj["silhouette"] <= 1.0


def test_report_single_kind_exit_2(runner, tmp_path):
    cfg_path, ckpt = model_artifacts(tmp_path)
    res = runner.invoke(main, ["report", "--checkpoint", str(ckpt), "--config",
                               str(cfg_path), "--kinds", "fog",
                               "--out", str(tmp_path / "r.json")])
    assert res.exit_code == 2


def test_report_is_deterministic(runner, tmp_path):
    cfg_path, ckpt = model_artifacts(tmp_path)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        res = runner.invoke(main, ["report", "--checkpoint", str(ckpt), "--config",
                                   str(cfg_path), "--kinds", "fog,noise",
                                   "--images-per-kind", "2", "--probe-size", "16",
                                   "--seed", "4", "--out", str(out)])
        assert res.exit_code == 0, res.output
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
