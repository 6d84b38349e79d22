"""Command-line front end binding the pipeline end to end.

Subcommands: simulate, train, tune, evaluate, diagnose, report. Every run
directory receives a metadata record echoing the invocation, so artifacts
are self-describing. Given identical flags and inputs, every subcommand
rewrites byte-identical outputs, except for the wall-time fields inside
metadata files.

Exit codes: 0 success, 2 usage error, 3 runtime or numerical failure.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    SchemaError,
    load_dataset,
    read_dataset_header,
    save_dataset,
)
from .density import DegenerateScaleError
from .scoring import (
    UndefinedCorrelationError,
    deviation_diagnostic,
    evaluate as evaluate_model,
    save_report,
)
from .network import forward, load_model, save_model
from .simulate import EXPERIMENT_NAMES, SplitSizes, generate, get_experiment
from .training import (
    GridSpec,
    TrainConfig,
    TrainingCollapseError,
    save_history,
    train as train_model,
    tune as tune_grid,
)

RUNTIME_ERRORS = (
    TrainingCollapseError,
    DegenerateScaleError,
    UndefinedCorrelationError,
    SchemaError,
    ValueError,
    OSError,
)

_CONFIG_ALIASES = {"lambda": "lam"}
_BOOL_KEYS = {"penalty_whole_sample", "standardize_inputs"}


def _fail(message):
    click.echo(f"error: {message}", err=True)
    sys.exit(3)


def _write_metadata(out_dir: Path, command: str, args: dict, started: float) -> None:
    doc = {
        "command": command,
        "args": args,
        "version": __version__,
        "wall_time_seconds": time.time() - started,
    }
    (out_dir / "metadata.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` config; '#' comments; unknown keys rejected."""
    known = {f.name: f.type for f in dataclass_fields(TrainConfig)}
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.UsageError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        key = _CONFIG_ALIASES.get(key.strip(), key.strip())
        value = value.strip()
        if key not in known:
            raise click.UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _parse_config_value(key, value, path, lineno)
    return out


def _parse_config_value(key: str, value: str, path, lineno: int):
    if key in _BOOL_KEYS:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise click.UsageError(f"{path}:{lineno}: {key} must be a boolean, got {value!r}")
    if key == "activation":
        return value
    if key == "bandwidth_n":
        return None if value.lower() in ("none", "m") else int(value)
    try:
        if key in ("w", "lam", "step_size"):
            return float(value)
        return int(value)
    except ValueError:
        raise click.UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}")


def _build_config(config_path: str | None, seed: int | None) -> TrainConfig:
    overrides = parse_config_file(config_path) if config_path else {}
    if seed is not None:
        overrides["seed"] = seed
    try:
        return TrainConfig(**overrides)
    except ValueError as exc:
        raise click.UsageError(f"invalid training config: {exc}")


def _load_split(data_dir: Path, name: str):
    path = data_dir / f"{name}.csv"
    if not path.exists():
        raise click.UsageError(f"missing dataset file {path}")
    try:
        return load_dataset(path)
    except SchemaError as exc:
        raise click.UsageError(str(exc))


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"{flag} expects a comma-separated list of numbers, got {text!r}")


@click.group()
@click.version_option(__version__)
def main():
    """Extract latent-variable realizations from noisy measurement panels."""


@main.command()
@click.option("--experiment", required=True, help=f"One of {', '.join(EXPERIMENT_NAMES)}.")
@click.option("--sizes", default="8000,1000,1000", show_default=True,
              help="Train,validation,test point counts.")
@click.option("--seed", type=int, required=True, help="Unsigned 64-bit master seed.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True,
              help="Output directory for train/val/test CSVs.")
def simulate(experiment, sizes, seed, out_dir):
    """Generate one experiment's train/val/test datasets."""
    started = time.time()
    try:
        spec = get_experiment(experiment)
    except ValueError:
        raise click.UsageError(
            f"unknown experiment {experiment!r}; choose from: {', '.join(EXPERIMENT_NAMES)}"
        )
    parts = _parse_float_list(sizes, "--sizes")
    if len(parts) != 3 or any(p != int(p) or p < 1 for p in parts):
        raise click.UsageError(f"--sizes expects three positive integers, got {sizes!r}")
    split = SplitSizes(*(int(p) for p in parts))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        datasets = generate(spec, split, seed)
    except RUNTIME_ERRORS as exc:
        _fail(str(exc))
    for name, ds in zip(("train", "val", "test"), datasets):
        save_dataset(ds, out_dir / f"{name}.csv", seed=seed, experiment=experiment)
    _write_metadata(out_dir, "simulate",
                    {"experiment": experiment, "sizes": sizes, "seed": seed}, started)
    click.echo(f"wrote train/val/test datasets to {out_dir}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True,
              help="Directory with train.csv and val.csv.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Flat key = value training config file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def train(data_dir, config_path, seed, out_dir):
    """Train a generator network; never reads ground-truth columns."""
    started = time.time()
    cfg = _build_config(config_path, seed)
    train_data = _load_split(data_dir, "train")
    val_data = _load_split(data_dir, "val")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        params, history = train_model(train_data, val_data, cfg)
    except RUNTIME_ERRORS as exc:
        _fail(str(exc))
    save_model(out_dir / "model.json", params, config=cfg.to_dict(), seed=cfg.seed)
    save_history(out_dir / "history.csv", history)
    meta_args = {
        "data": str(data_dir),
        "config": cfg.to_dict(),
        "best_epoch": history.best_epoch,
        "stop_reason": history.stop_reason,
        "experiment": read_dataset_header(data_dir / "train.csv").get("experiment"),
    }
    _write_metadata(out_dir, "train", meta_args, started)
    click.echo(
        f"trained for {len(history.val_losses)} epochs "
        f"(best epoch {history.best_epoch}, {history.stop_reason}); model at {out_dir}"
    )


@main.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--w-grid", default="0.5,1.0,1.5,2.0", show_default=True)
@click.option("--lambda-grid", default="0.1,0.3,0.5", show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def tune(data_dir, config_path, seed, w_grid, lambda_grid, out_dir):
    """Grid-search (w, lambda) on validation loss; train the winning cell."""
    started = time.time()
    base_cfg = _build_config(config_path, seed)
    grid = GridSpec(
        w_values=_parse_float_list(w_grid, "--w-grid"),
        lambda_values=_parse_float_list(lambda_grid, "--lambda-grid"),
    )
    train_data = _load_split(data_dir, "train")
    val_data = _load_split(data_dir, "val")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        best_cfg, leaderboard = tune_grid(train_data, val_data, grid, base_cfg)
        params, history = train_model(train_data, val_data, best_cfg)
    except RUNTIME_ERRORS as exc:
        _fail(str(exc))
    with open(out_dir / "leaderboard.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "lambda", "val_loss", "best_epoch", "epochs", "status"])
        for row in leaderboard:
            writer.writerow([
                repr(row["w"]), repr(row["lambda"]), repr(row["val_loss"]),
                row["best_epoch"], row["epochs"], row["status"],
            ])
    save_model(out_dir / "model.json", params, config=best_cfg.to_dict(), seed=best_cfg.seed)
    save_history(out_dir / "history.csv", history)
    _write_metadata(out_dir, "tune", {
        "data": str(data_dir),
        "config": best_cfg.to_dict(),
        "w_grid": w_grid,
        "lambda_grid": lambda_grid,
        "best_w": best_cfg.w,
        "best_lambda": best_cfg.lam,
    }, started)
    click.echo(f"best cell w={best_cfg.w} lambda={best_cfg.lam}; artifacts at {out_dir}")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="Trained model JSON.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True,
              help="Directory with test.csv (must carry the xstar column).")
@click.option("--eps", default=None,
              help="Comma-separated large-deviation thresholds; default 0.25,0.5,1.0 of std(xstar).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def evaluate(model_path, data_dir, eps, out_dir):
    """Score a trained model against the hidden truth of a test set."""
    started = time.time()
    params = load_model(model_path)
    test = _load_split(data_dir, "test")
    if test.truth is None:
        raise click.UsageError(f"{data_dir / 'test.csv'} has no ground truth (xstar column)")
    eps_list = _parse_float_list(eps, "--eps") if eps else None
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = evaluate_model(params, test, eps_list)
        latents = forward(params, test.features)
    except RUNTIME_ERRORS as exc:
        _fail(str(exc))
    experiment = read_dataset_header(data_dir / "test.csv").get("experiment")
    payload = {"experiment": experiment, **report.to_dict()}
    save_report(out_dir / "eval.json", payload)
    with open(out_dir / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("corr_latent,corr_x1,n_test,large_dev_props\n")
        fh.write(report.csv_row() + "\n")
    with open(out_dir / "scatter.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("xstar,xhat\n")
        for xs, xh in zip(test.truth, latents):
            fh.write(f"{xs!r},{xh!r}\n")
    _write_metadata(out_dir, "evaluate", {
        "model": str(model_path), "data": str(data_dir), "eps": eps,
    }, started)
    click.echo(f"corr(latent, truth) = {report.corr_latent:.4f} "
               f"(x1 baseline {report.corr_x1:.4f}); report at {out_dir}")


@main.command()
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True,
              help="Directory with test.csv carrying the xstar column.")
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="Use this model's latents instead of the truth column.")
@click.option("--noise", default="0,0.5,1.0", show_default=True,
              help="Comma-separated noise stds; must include 0.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
def diagnose(data_dir, model_path, noise, config_path, seed, out_dir):
    """Loss-vs-noise curve: uncorrelated deviations must raise the loss."""
    started = time.time()
    cfg = _build_config(config_path, seed)
    test = _load_split(data_dir, "test")
    noise_stds = _parse_float_list(noise, "--noise")
    if 0.0 not in noise_stds:
        raise click.UsageError("--noise must include 0 (the undisturbed reference)")
    if model_path is not None:
        latents = forward(load_model(model_path), test.features)
    elif test.truth is not None:
        latents = test.truth
    else:
        raise click.UsageError("need either --model or a test set with the xstar column")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        curve = deviation_diagnostic(test, latents, noise_stds, cfg, seed)
    except RUNTIME_ERRORS as exc:
        _fail(str(exc))
    with open(out_dir / "diagnostic.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("noise_std,mean_loss\n")
        for s, v in zip(curve.noise_stds, curve.mean_losses):
            fh.write(f"{s!r},{v!r}\n")
    _write_metadata(out_dir, "diagnose", {
        "data": str(data_dir),
        "model": None if model_path is None else str(model_path),
        "noise": noise,
        "seed": seed,
        "increasing_fraction": curve.increasing_fraction(),
    }, started)
    click.echo(
        "mean loss by noise std: "
        + ", ".join(f"{s:g}: {v:.4f}" for s, v in zip(curve.noise_stds, curve.mean_losses))
    )


@main.command()
@click.argument("run_dirs", nargs=-1, type=click.Path(exists=True, path_type=Path))
@click.option("--abs", "use_abs", is_flag=True,
              help="Order statistics over |corr| (sign-unidentified experiments).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True,
              help="Output CSV path.")
def report(run_dirs, use_abs, out_path):
    """Aggregate eval.json files from run directories into one summary table."""
    if not run_dirs:
        raise click.UsageError("provide at least one run directory containing eval.json")
    by_experiment: dict[str, list[dict]] = {}
    for d in run_dirs:
        path = Path(d) / "eval.json"
        if not path.exists():
            raise click.UsageError(f"{d}: no eval.json (run `geen evaluate` first)")
        doc = json.loads(path.read_text(encoding="utf-8"))
        by_experiment.setdefault(doc.get("experiment") or "unknown", []).append(doc)
    rows = []
    for experiment in sorted(by_experiment):
        docs = by_experiment[experiment]
        corrs = np.array([d["corr_latent"] for d in docs])
        if use_abs:
            corrs = np.abs(corrs)
        order = np.sort(corrs)
        rows.append({
            "experiment": experiment,
            "n_runs": len(docs),
            "corr_min": float(order[0]),
            "corr_median": float(order[(len(order) - 1) // 2]),
            "corr_max": float(order[-1]),
            "corr_x1": float(docs[0]["corr_x1"]),
        })
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("experiment,n_runs,corr_min,corr_median,corr_max,corr_x1\n")
        for r in rows:
            fh.write(
                f"{r['experiment']},{r['n_runs']},{r['corr_min']!r},"
                f"{r['corr_median']!r},{r['corr_max']!r},{r['corr_x1']!r}\n"
            )
    click.echo(f"wrote {len(rows)} experiment rows to {out_path}")


if __name__ == "__main__":
    main()
