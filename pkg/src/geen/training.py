"""Training orchestration: observation batching, the epoch loop, early
stopping on validation loss, grid tuning, and multi-seed restarts.

Protocol notes. The training observations are bootstrapped once per run
and revisited every epoch in a freshly shuffled order; one epoch is one
pass over all of them, with gradients averaged over `batch_obs`
observations per optimizer step. The validation observation set is frozen
at the start of the run so validation losses are comparable across epochs.
Ground-truth columns are stripped before any of this code sees the data:
training, validation, and tuning never read them.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, ObservationSet, bootstrap_observations, check_seed
from .density import DegenerateScaleError, KdeContext, context_bandwidths
from .scoring import EvalReport, RunSummary, UndefinedCorrelationError, evaluate, summarize
from .loss import normalization_penalty, total_loss, total_loss_and_grad
from .network import (
    MlpParams,
    ParamGrads,
    backward,
    forward,
    init_mlp,
    init_opt_state,
    opt_step,
    with_standardization,
)

log = logging.getLogger(__name__)


class TrainingCollapseError(RuntimeError):
    """Generated latents lost all spread; training cannot continue."""

    def __init__(self, epoch: int, step: int, cause: Exception):
        super().__init__(f"latent collapse at epoch {epoch}, step {step}: {cause}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Everything a single training run depends on besides the data."""

    m: int = 200
    n_obs_train: int = 2000
    n_obs_val: int = 300
    batch_obs: int = 32
    w: float = 1.0
    lam: float = 0.3
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    hidden: int = 10
    depth: int = 6
    activation: str = "tanh"
    step_size: float = 1e-3
    bandwidth_n: int | None = None  # None: use m, the KDE's own sample size
    penalty_whole_sample: bool = False
    standardize_inputs: bool = True

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.w <= 0:
            raise ValueError(f"w must be > 0, got {self.w}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.n_obs_train < 1 or self.n_obs_val < 1 or self.batch_obs < 1:
            raise ValueError("observation counts must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter grid; defaults span the recommended tuning ranges."""

    w_values: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    lambda_values: tuple[float, ...] = (0.1, 0.3, 0.5)
    allow_outside_ranges: bool = False

    def __post_init__(self):
        if not self.w_values or not self.lambda_values:
            raise ValueError("grid must be non-empty")
        if not self.allow_outside_ranges:
            if any(not 0.5 <= w <= 2.0 for w in self.w_values):
                raise ValueError("w values outside [0.5, 2]; set allow_outside_ranges to override")
            if any(not 0.1 <= l <= 0.5 for l in self.lambda_values):
                raise ValueError(
                    "lambda values outside [0.1, 0.5]; set allow_outside_ranges to override"
                )


@dataclass
class TrainHistory:
    """Per-epoch losses plus where and why the run stopped."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def best_val_loss(self) -> float:
        return self.val_losses[self.best_epoch - 1]


class EarlyStopper:
    """Tracks the best validation loss; stops after `patience` bad epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def _observation_arrays(features: np.ndarray, obs: ObservationSet) -> np.ndarray:
    return np.stack([features[b.indices] for b in obs.batches])


def _batch_penalty_override(points_batch, latents_batch):
    """Pooled mean gap over a whole batch (the whole-sample penalty variant)."""
    x1 = np.concatenate([p[:, 0] for p in points_batch])
    lat = np.concatenate(latents_batch)
    return float((x1.mean() - lat.mean()) ** 2)


def _mean_val_loss(params: MlpParams, val_points: np.ndarray, cfg: TrainConfig) -> float:
    lam_eff = 0.0 if cfg.penalty_whole_sample else cfg.lam
    vals = np.empty(val_points.shape[0])
    all_latents = []
    for i, pts in enumerate(val_points):
        lat = forward(params, pts)
        bw = context_bandwidths(pts, lat, cfg.w, cfg.bandwidth_n)
        vals[i] = total_loss(KdeContext(pts, lat, bw), lam_eff).total
        if cfg.penalty_whole_sample:
            all_latents.append(lat)
    out = float(vals.mean())
    if cfg.penalty_whole_sample:
        x1 = np.concatenate([p[:, 0] for p in val_points])
        out += cfg.lam * normalization_penalty(x1, np.concatenate(all_latents))
    return out


def train(
    train_data: Dataset, val_data: Dataset, cfg: TrainConfig
) -> tuple[MlpParams, TrainHistory]:
    """Train a generator network; returns the best-validation-epoch parameters.

    Truth columns are dropped on entry and never consulted. Deterministic:
    identical (data, cfg) reproduce the full parameter trajectory.
    """
    if train_data.k != val_data.k:
        raise ValueError("train and validation data must share k")
    feats = train_data.without_truth().features
    val_feats = val_data.without_truth().features

    root = np.random.SeedSequence(check_seed(cfg.seed))
    init_ss, train_boot_ss, val_boot_ss, shuffle_ss = root.spawn(4)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))

    params = init_mlp(
        train_data.k, cfg.hidden, cfg.depth, seed=init_ss, activation=cfg.activation
    )
    if cfg.standardize_inputs:
        params = with_standardization(params, feats)
    state = init_opt_state(params, step_size=cfg.step_size)

    train_obs = bootstrap_observations(train_data, cfg.m, cfg.n_obs_train, seed=train_boot_ss)
    val_obs = bootstrap_observations(val_data, cfg.m, cfg.n_obs_val, seed=val_boot_ss)
    train_points = _observation_arrays(feats, train_obs)
    val_points = _observation_arrays(val_feats, val_obs)

    history = TrainHistory()
    stopper = EarlyStopper(cfg.patience)
    best_params = params
    n_obs = train_points.shape[0]

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n_obs)
        epoch_losses = []
        for start in range(0, n_obs, cfg.batch_obs):
            step_no = start // cfg.batch_obs + 1
            chunk = order[start : start + cfg.batch_obs]
            grads_acc = None
            batch_losses = []
            batch_points, batch_latents = [], []
            for idx in chunk:
                pts = train_points[idx]
                lat = forward(params, pts)
                try:
                    bw = context_bandwidths(pts, lat, cfg.w, cfg.bandwidth_n)
                except DegenerateScaleError as exc:
                    raise TrainingCollapseError(epoch, step_no, exc) from exc
                ctx = KdeContext(pts, lat, bw)
                lam_eff = 0.0 if cfg.penalty_whole_sample else cfg.lam
                breakdown, grad_lat = total_loss_and_grad(ctx, lam_eff)
                batch_losses.append(breakdown.total)
                if cfg.penalty_whole_sample:
                    batch_points.append(pts)
                    batch_latents.append(lat)
                pg = backward(params, pts, grad_lat)
                if grads_acc is None:
                    grads_acc = pg
                else:
                    grads_acc = _add_grads(grads_acc, pg)
            scale = 1.0 / len(chunk)
            grads_acc = _scale_grads(grads_acc, scale)
            step_loss = float(np.mean(batch_losses))
            if cfg.penalty_whole_sample:
                pooled = _batch_penalty_override(batch_points, batch_latents)
                step_loss += cfg.lam * pooled
                grads_acc = _add_grads(
                    grads_acc,
                    _pooled_penalty_grads(params, batch_points, batch_latents, cfg.lam),
                )
            epoch_losses.append(step_loss)
            params, state = opt_step(params, grads_acc, state)

        try:
            val_loss = _mean_val_loss(params, val_points, cfg)
        except DegenerateScaleError as exc:
            raise TrainingCollapseError(epoch, 0, exc) from exc
        history.train_losses.append(float(np.mean(epoch_losses)))
        history.val_losses.append(val_loss)
        improved = val_loss < stopper.best_loss
        should_stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = params
        log.debug(
            "epoch %d train %.6f val %.6f best %.6f", epoch, history.train_losses[-1],
            val_loss, stopper.best_loss,
        )
        if should_stop:
            history.stop_reason = "early_stop"
            break
    else:
        history.stop_reason = "max_epochs"
    history.best_epoch = stopper.best_epoch
    return best_params, history


def _add_grads(a: ParamGrads, b: ParamGrads) -> ParamGrads:
    return ParamGrads(
        weights=tuple(x + y for x, y in zip(a.weights, b.weights)),
        biases=tuple(x + y for x, y in zip(a.biases, b.biases)),
    )


def _scale_grads(g: ParamGrads, s: float) -> ParamGrads:
    return ParamGrads(
        weights=tuple(s * x for x in g.weights),
        biases=tuple(s * x for x in g.biases),
    )


def _pooled_penalty_grads(params, points_batch, latents_batch, lam):
    """Parameter gradient of the pooled penalty over one batch."""
    x1 = np.concatenate([p[:, 0] for p in points_batch])
    lat = np.concatenate(latents_batch)
    coeff = 2.0 * lam * (lat.mean() - x1.mean()) / lat.size
    acc = None
    for pts, lats in zip(points_batch, latents_batch):
        pg = backward(params, pts, np.full(lats.size, coeff))
        acc = pg if acc is None else _add_grads(acc, pg)
    return acc


def tune(
    train_data: Dataset,
    val_data: Dataset,
    grid: GridSpec,
    base_cfg: TrainConfig,
) -> tuple[TrainConfig, list[dict]]:
    """Grid search over (w, lambda) by best validation loss; never reads truth.

    Returns the winning config and a leaderboard of one record per cell,
    sorted ascending by validation loss. Cells run in parallel when the
    GEEN_JOBS environment variable asks for more than one worker.
    """
    cells = [
        replace(base_cfg, w=float(w), lam=float(lam))
        for w in grid.w_values
        for lam in grid.lambda_values
    ]
    jobs = int(os.environ.get("GEEN_JOBS", "1"))
    train_stripped = train_data.without_truth()
    val_stripped = val_data.without_truth()
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(_tune_cell, [(train_stripped, val_stripped, c) for c in cells])
            )
    else:
        results = [_tune_cell((train_stripped, val_stripped, c)) for c in cells]

    leaderboard = []
    for cfg, outcome in zip(cells, results):
        record = {"w": cfg.w, "lambda": cfg.lam}
        record.update(outcome)
        leaderboard.append(record)
    leaderboard.sort(key=lambda r: (r["val_loss"], r["w"], r["lambda"]))
    ok = [r for r in leaderboard if np.isfinite(r["val_loss"])]
    if not ok:
        raise TrainingCollapseError(0, 0, RuntimeError("every grid cell collapsed"))
    best = ok[0]
    best_cfg = replace(base_cfg, w=best["w"], lam=best["lambda"])
    return best_cfg, leaderboard


def _tune_cell(args):
    train_data, val_data, cfg = args
    try:
        _, history = train(train_data, val_data, cfg)
        return {
            "val_loss": history.best_val_loss,
            "best_epoch": history.best_epoch,
            "epochs": len(history.val_losses),
            "status": "ok",
        }
    except TrainingCollapseError as exc:
        return {"val_loss": np.inf, "best_epoch": 0, "epochs": 0, "status": f"collapsed: {exc}"}


def multi_run(
    train_data: Dataset,
    val_data: Dataset,
    test_data: Dataset,
    cfg: TrainConfig,
    n_runs: int,
    eps_list=None,
    use_abs: bool = False,
) -> RunSummary:
    """Repeat training with seeds cfg.seed .. cfg.seed + n_runs - 1.

    Data is shared across runs; only the training seed varies. Collapsed or
    degenerate runs are counted as failures and excluded from the order
    statistics.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    reports: list[EvalReport] = []
    n_failed = 0
    for r in range(n_runs):
        run_cfg = replace(cfg, seed=cfg.seed + r)
        try:
            params, _ = train(train_data, val_data, run_cfg)
            reports.append(evaluate(params, test_data, eps_list))
        except (TrainingCollapseError, UndefinedCorrelationError) as exc:
            log.warning("run %d failed: %s", r, exc)
            n_failed += 1
    if not reports:
        return RunSummary(
            reports=(), n_failed=n_failed, corr_min=None, corr_median=None,
            corr_max=None, corr_x1=None,
        )
    return summarize(reports, n_failed=n_failed, use_abs=use_abs)


def multi_run_experiment(
    experiment: str,
    sizes,
    cfg: TrainConfig,
    n_runs: int,
    data_seed: int | None = None,
    eps_list=None,
) -> RunSummary:
    """Generate one experiment's data, then multi_run over restart seeds.

    The sign of the latent is unidentified for the no_normalization
    experiment, so its summary uses |corr|.
    """
    from .simulate import get_experiment, generate

    spec = get_experiment(experiment)
    train_data, val_data, test_data = generate(
        spec, sizes, cfg.seed if data_seed is None else data_seed
    )
    return multi_run(
        train_data,
        val_data,
        test_data,
        cfg,
        n_runs,
        eps_list=eps_list,
        use_abs=(experiment == "no_normalization"),
    )


def save_history(path: str | Path, history: TrainHistory) -> None:
    """history CSV: epoch,train_loss,val_loss rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tr, va) in enumerate(zip(history.train_losses, history.val_losses), start=1):
            writer.writerow([i, repr(tr), repr(va)])
