"""Command-line entry point.

Subcommands: degrade, enhance, train, gradcheck, report.
Exit codes: 0 success, 1 verification failure, 2 input/config error,
3 numerical failure. Every subcommand is deterministic under --seed.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import degrade as deg
from . import imageio
from .config import EnhancerConfig, TrainConfig
from .checksuite import run_suite
from .network import Enhancer
from .params import load_checkpoint, save_checkpoint
from .tensor import ConfigError, NumericsError, Tensor, set_default_dtype, strict_mode
from .train import (TrainingDiverged, build_probe_set, measure_discriminability,
                    train_toy)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


@click.group()
def main() -> None:
    """Prompt-conditioned image enhancement toolkit."""


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _spec_from_options(kind, atmospheric, fog_i, gamma, sigma, beta, density,
                       overlay, seed) -> deg.DegradationSpec:
    params: dict = {}
    if kind == "fog":
        params = {"A": atmospheric, "i": fog_i}
    elif kind == "dark":
        params = {"gamma": gamma}
    elif kind == "snow":
        params = {"density": density}
    elif kind == "rain":
        params = {"beta": beta, "overlay": overlay}
    elif kind == "noise":
        params = {"sigma": sigma}
    return deg.DegradationSpec(kind, params, seed)


@main.command("degrade")
@click.argument("src", type=click.Path(exists=False))
@click.argument("dst", type=click.Path())
@click.option("--kind", type=click.Choice(deg.KINDS + ("none",)), default=None,
              help="Degradation kind (single-image mode).")
@click.option("--A", "atmospheric", type=float, default=0.5, show_default=True)
@click.option("--i", "fog_i", type=int, default=0, show_default=True)
@click.option("--gamma", type=float, default=2.0, show_default=True)
@click.option("--sigma", type=float, default=25.0, show_default=True)
@click.option("--beta", type=float, default=0.8, show_default=True)
@click.option("--density", type=click.Choice(sorted(deg.SNOW_DENSITIES)), default="medium")
@click.option("--rain-overlay", "overlay", is_flag=True,
              help="Use the streak-overlay blending variant for rain.")
@click.option("--kinds", default=",".join(deg.KINDS), show_default=True,
              help="Comma-separated kinds (directory mode).")
@click.option("--mix", type=float, default=2.0 / 3.0, show_default=True,
              help="Fraction of images degraded (directory mode).")
@click.option("--manifest", type=click.Path(), default=None,
              help="Manifest output path (directory mode).")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_degrade(src, dst, kind, atmospheric, fog_i, gamma, sigma, beta, density,
                overlay, kinds, mix, manifest, seed):
    """Degrade one image, or a directory of images with a manifest."""
    src_path, dst_path = Path(src), Path(dst)
    if not src_path.exists():
        _fail(EXIT_INPUT, f"{src}: no such file or directory")
    try:
        if src_path.is_dir():
            dst_path.mkdir(parents=True, exist_ok=True)
            mf = deg.build_manifest(src_path, kinds=tuple(kinds.split(",")), mix=mix,
                                    seed=seed, dst_dir=dst_path)
            deg.materialize(mf)
            for entry in mf:
                click.echo(json.dumps({"dst": entry.dst, **entry.spec.to_json()},
                                      sort_keys=True))
            mf.save(manifest or dst_path / "manifest.jsonl")
        else:
            if kind is None:
                _fail(EXIT_INPUT, "--kind is required in single-image mode")
            spec = _spec_from_options(kind, atmospheric, fog_i, gamma, sigma, beta,
                                      density, overlay, seed)
            img = imageio.read_image(src_path)
            imageio.write_image(dst_path, deg.apply_spec(img, spec))
            click.echo(json.dumps({"dst": str(dst_path), **spec.to_json()}, sort_keys=True))
    except (deg.ParameterError, ConfigError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))


def _load_model(checkpoint: str, config: str, seed: int) -> Enhancer:
    if not Path(config).exists():
        _fail(EXIT_INPUT, f"{config}: config file not found")
    if not Path(checkpoint).exists():
        _fail(EXIT_INPUT, f"{checkpoint}: checkpoint not found")
    cfg = EnhancerConfig.load(config)
    set_default_dtype(np.float64 if cfg.elem_type == "f64" else np.float32)
    model = Enhancer(cfg, seed=seed)
    model.store.load_state(load_checkpoint(checkpoint))
    return model


@main.command("enhance")
@click.argument("src", type=click.Path())
@click.argument("dst", type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--config", required=True, type=click.Path())
@click.option("--dump-features", type=click.Path(), default=None,
              help="Directory for per-level feature dumps (binary + JSON sidecar).")
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_enhance(src, dst, checkpoint, config, dump_features, seed):
    """Enhance one image with a trained checkpoint."""
    if not Path(src).exists():
        _fail(EXIT_INPUT, f"{src}: no such file")
    try:
        model = _load_model(checkpoint, config, seed)
        pixels = imageio.read_image(src)
        x = Tensor(pixels.transpose(2, 0, 1)[None].astype(model.dtype))
        with strict_mode(False):
            out, feats = model.enhance(x)
        imageio.write_image(dst, out.data[0].transpose(1, 2, 0))
        if dump_features:
            dump_dir = Path(dump_features)
            dump_dir.mkdir(parents=True, exist_ok=True)
            for level, feat in feats.items():
                raw = dump_dir / f"level{level}.bin"
                raw.write_bytes(feat.data.astype("<f8").tobytes())
                (dump_dir / f"level{level}.json").write_text(json.dumps(
                    {"shape": list(feat.shape), "dtype": "f64", "order": "C"},
                    sort_keys=True) + "\n")
        click.echo(f"enhanced {src} -> {dst}")
    except (ConfigError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    except NumericsError as exc:
        _fail(EXIT_NUMERIC, str(exc))


@main.command("gradcheck")
@click.option("--tol", type=float, default=1e-4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--op", "only", default=None, help="Check a single registered op.")
@click.option("--samples", type=int, default=64, show_default=True,
              help="Max probed elements per tensor.")
@click.option("--flip-op", default=None, hidden=True,
              help="Fault-injection hook: negate analytic gradients of one op.")
def cmd_gradcheck(tol, seed, only, samples, flip_op):
    """Run finite-difference gradient checks over every registered op."""
    try:
        reports = run_suite(tol=tol, seed=seed, only=only, flip_op=flip_op,
                            max_samples=samples)
    except ConfigError as exc:
        _fail(EXIT_INPUT, str(exc))
    if not reports:
        _fail(EXIT_INPUT, f"unknown op {only!r}")
    failed = []
    for rep in reports:
        click.echo(rep.summary())
        if not rep.passed:
            failed.append(rep.op)
    if failed:
        _fail(EXIT_VERIFICATION, "gradient check failed for: " + ", ".join(failed))
    click.echo(f"all {len(reports)} gradient checks passed at tol {tol:g}")


@main.command("train")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--config", required=True, type=click.Path())
@click.option("--train-config", "train_config_path", type=click.Path(), default=None)
@click.option("--iters", type=int, default=None, help="Override iteration count.")
@click.option("--seed", type=int, default=None, help="Override training seed.")
@click.option("--out", "checkpoint_out", required=True, type=click.Path())
@click.option("--curve", "curve_out", type=click.Path(), default=None)
def cmd_train(manifest_path, config, train_config_path, iters, seed, checkpoint_out,
              curve_out):
    """Train the toy restoration objective on a degradation manifest."""
    for p in (manifest_path, config) + ((train_config_path,) if train_config_path else ()):
        if not Path(p).exists():
            _fail(EXIT_INPUT, f"{p}: not found")
    try:
        ecfg = EnhancerConfig.load(config)
        tcfg = TrainConfig.load(train_config_path) if train_config_path else TrainConfig()
        if iters is not None:
            tcfg.iters = iters
        if seed is not None:
            tcfg.seed = seed
        tcfg.validate()
        set_default_dtype(np.float64 if ecfg.elem_type == "f64" else np.float32)
        manifest = deg.DatasetManifest.load(manifest_path)
        model, curve = train_toy(manifest, tcfg, ecfg,
                                 log=lambda it, v: click.echo(f"iter {it}: loss {v:.6f}"))
    except TrainingDiverged as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except (ConfigError, deg.ParameterError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    save_checkpoint(model.store, checkpoint_out)
    if curve_out:
        with open(curve_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "loss"])
            writer.writerows(curve)
    click.echo(f"saved checkpoint to {checkpoint_out}")


@main.command("report")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--config", required=True, type=click.Path())
@click.option("--kinds", default="fog,dark", show_default=True)
@click.option("--level", type=int, default=1, show_default=True)
@click.option("--images-per-kind", type=int, default=8, show_default=True)
@click.option("--probe-size", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "report_out", required=True, type=click.Path())
def cmd_report(checkpoint, config, kinds, level, images_per_kind, probe_size, seed,
               report_out):
    """Measure prompt discriminability of a checkpoint on synthetic probes."""
    kind_list = tuple(k for k in kinds.split(",") if k)
    if len(kind_list) < 2:
        _fail(EXIT_INPUT, "report requires at least 2 degradation kinds")
    try:
        model = _load_model(checkpoint, config, seed)
        probes = build_probe_set(seed, kind_list, images_per_kind=images_per_kind,
                                 size=probe_size, seed=seed + 7)
        report = measure_discriminability(model, probes, level=level)
    except (ConfigError, deg.ParameterError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    except NumericsError as exc:
        _fail(EXIT_NUMERIC, str(exc))
    Path(report_out).write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    click.echo(f"level {level} silhouette: {report.silhouette:.4f} "
               f"({report.sample_count} probes)")


if __name__ == "__main__":
    main()
