"""Batch training loop, evaluation and multi-seed experiment runner."""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .equilibrium import NotConvergedError, SolverConfig
from .gradients import (
    SensitivityError,
    feedforward_grads,
    loss_grads_one_layer,
    loss_grads_two_layer,
    mse,
    semi_grads_one_layer,
    semi_grads_two_layer,
)
from .networks import forward_feedforward_hidden, init_feedforward, init_one_layer, init_two_layer, predict
from .numeric import make_rng
from .optimizer import adam_states, apply_adam

ARCH_CHOICES = ("one-layer-exact", "one-layer-semi", "two-layer-exact", "two-layer-semi", "feedforward")


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "two-layer-exact"
    epochs: int = 50
    steps_per_epoch: int = 200
    n_batches: int = 6
    batch_size: int | None = None  # None: split the training set into n_batches parts
    eval_every: int = 4
    lr: float = 0.01
    seed: int = 0
    n_h: int | None = 5
    supervised_mask: tuple[bool, ...] | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.arch not in ARCH_CHOICES:
            raise ValueError(f"unknown arch {self.arch!r}; choose from {ARCH_CHOICES}")
        for name in ("epochs", "steps_per_epoch", "n_batches", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.arch != "one-layer-exact" and self.arch != "one-layer-semi" and not self.n_h:
            raise ValueError(f"{self.arch} needs n_h >= 1")


@dataclass
class MetricsRow:
    run_id: int
    epoch: int
    split: str
    mse: float
    wallclock_s: float


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: int | None = None, sample_index: int | None = None):
        self.step = step
        self.sample_index = sample_index
        super().__init__(message)


def init_model(config: TrainConfig, n_in: int, n_out: int, rng: np.random.Generator):
    if config.arch.startswith("one-layer"):
        return init_one_layer(n_in, n_out, rng)
    if config.arch == "feedforward":
        return init_feedforward(n_in, config.n_h, n_out, rng)
    return init_two_layer(n_in, config.n_h, n_out, rng)


_GRADS = {
    "one-layer-exact": loss_grads_one_layer,
    "one-layer-semi": semi_grads_one_layer,
    "two-layer-exact": loss_grads_two_layer,
    "two-layer-semi": semi_grads_two_layer,
}


def batch_gradients(model, X, targets, config: TrainConfig, mask=None):
    """Forward the batch, then return ``(per-sample losses, dL/dY, batch-mean grads)``."""
    if config.arch == "feedforward":
        y1, y2 = forward_feedforward_hidden(model, X)
        losses, dL = mse(y1, targets, mask)
        return losses, dL, feedforward_grads(model, X, dL, hidden=(y1, y2))
    y, eq = predict(model, X, config.solver)
    eq.check(config.solver.tolerance)
    losses, dL = mse(y, targets, mask)
    return losses, dL, _GRADS[config.arch](model, X, eq, dL)


def make_batches(n_train: int, config: TrainConfig) -> list[slice]:
    if config.batch_size is None:
        bounds = np.linspace(0, n_train, config.n_batches + 1).round().astype(int)
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if config.batch_size * config.n_batches > n_train:
        raise ValueError(f"{config.n_batches} batches of {config.batch_size} exceed {n_train} training samples")
    return [slice(i * config.batch_size, (i + 1) * config.batch_size) for i in range(config.n_batches)]


def train_epoch(
    model,
    X: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    states,
    mask=None,
    hook: Callable | None = None,
) -> float:
    """Run ``steps_per_epoch`` ADAM steps cycling over the fixed batches in order.

    Returns the mean per-sample training MSE over all samples processed this
    epoch (measured on the forward pass preceding each step). ``hook`` is
    called as ``hook(step, dL_dY, grads)`` before each update.
    """
    batches = make_batches(X.shape[0], config)
    total, count = 0.0, 0
    for step in range(config.steps_per_epoch):
        sl = batches[step % len(batches)]
        try:
            losses, dL, grads = batch_gradients(model, X[sl], targets[sl], config, mask)
        except NotConvergedError as err:
            idx = None if err.sample_index is None else sl.start + err.sample_index
            raise TrainingError(f"step {step}: {err}", step, idx) from err
        except SensitivityError as err:
            raise TrainingError(f"step {step}: {err}", step) from err
        if hook is not None:
            hook(step, dL, grads)
        apply_adam(states, model, grads)
        total += float(losses.sum())
        count += losses.shape[0]
    return total / count


def evaluate_mse(model, X, targets, solver: SolverConfig = SolverConfig(), mask=None) -> float:
    """Mean per-sample MSE. A non-converged equilibrium only warns here."""
    y, eq = predict(model, X, solver)
    if eq is not None and not eq.converged:
        worst = float(np.max(eq.residual_norm))
        warnings.warn(f"evaluation equilibrium not converged (max residual {worst:.2e})", RuntimeWarning)
    return float(mse(y, targets, mask)[0].mean())


@dataclass
class RunResult:
    run_id: int
    rows: list[MetricsRow]
    model: object = None
    error: str | None = None


def run_single(config: TrainConfig, data, run_id: int = 0, hook=None) -> RunResult:
    """Train one model. ``data`` is ``(X_train, T_train, X_test, T_test)``.

    Train and test rows are emitted every ``eval_every`` epochs and at the
    final epoch; the train value is that epoch's mean training MSE.
    """
    X_tr, T_tr, X_te, T_te = data
    mask = None if config.supervised_mask is None else np.array(config.supervised_mask)
    rng = make_rng(config.seed)
    model = init_model(config, X_tr.shape[1], T_tr.shape[1], rng)
    states = adam_states(model, config.lr)
    rows = []
    start = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            train = train_epoch(model, X_tr, T_tr, config, states, mask, hook)
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                wall = time.perf_counter() - start
                rows.append(MetricsRow(run_id, epoch, "train", train, wall))
                if X_te is not None and len(X_te):
                    test = evaluate_mse(model, X_te, T_te, config.solver, mask)
                    rows.append(MetricsRow(run_id, epoch, "test", test, time.perf_counter() - start))
    except TrainingError as err:
        return RunResult(run_id, rows, model, f"epoch {epoch}, {err}")
    return RunResult(run_id, rows, model)


def _run_job(args):
    config, data, run_id = args
    return run_single(config, data, run_id)


def run_experiment(config: TrainConfig, data, n_runs: int, jobs: int = 1) -> list[RunResult]:
    """Run ``n_runs`` seeds ``config.seed + r``; results come back ordered by run id."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    tasks = [(replace(config, seed=config.seed + r), data, r) for r in range(n_runs)]
    if jobs > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, tasks))
    else:
        results = [_run_job(t) for t in tasks]
    return sorted(results, key=lambda r: r.run_id)


def summarize(results: list[RunResult]) -> list[dict]:
    """Cross-run mean and standard error per (epoch, split), over surviving runs."""
    ok = [r for r in results if r.error is None]
    table: dict[tuple[int, str], list[float]] = {}
    for r in ok:
        for row in r.rows:
            table.setdefault((row.epoch, row.split), []).append(row.mse)
    out = []
    for (epoch, split), vals in sorted(table.items(), key=lambda kv: (kv[0][0], kv[0][1] != "train")):
        v = np.array(vals)
        sem = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append({"epoch": epoch, "split": split, "mean_mse": float(v.mean()), "sem_mse": sem, "n_runs": len(v)})
    return out


def write_metrics(results: list[RunResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "epoch", "split", "mse", "wallclock_s"])
        for r in sorted(results, key=lambda r: r.run_id):
            for row in r.rows:
                w.writerow([row.run_id, row.epoch, row.split, f"{row.mse:.17g}", f"{row.wallclock_s:.3f}"])


def write_summary(summary: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "split", "mean_mse", "sem_mse", "n_runs"])
        for s in summary:
            w.writerow([s["epoch"], s["split"], f"{s['mean_mse']:.17g}", f"{s['sem_mse']:.17g}", s["n_runs"]])


def final_test_mse(results: list[RunResult]) -> list[float]:
    out = []
    for r in results:
        if r.error is None:
            tests = [row for row in r.rows if row.split == "test"]
            if tests:
                out.append(tests[-1].mse)
    return out
