"""Sequential multi-task Bayesian optimization over a discrete gear-ratio grid.

Each task is optimized in turn with UCB acquisition on a multi-task GP that
is refit on every observation collected so far, from every task.  A task
stops when the posterior variance at the maximizer of the posterior mean is
small, when the same gear ratio is chosen several times in a row, or at a
hard query cap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .errors import ConfigurationError, ParameterDomainError

log = logging.getLogger(__name__)

VARIANCE, REPEAT, CAP = "variance", "repeat", "cap"


def default_grid(g_min=16.0, g_max=144.0, n=50):
    return np.linspace(g_min, g_max, n)


@dataclass(frozen=True)
class AcquisitionConfig:
    kappa: float = 100.0
    grid: np.ndarray = field(default_factory=default_grid)
    bounds: tuple = (16.0, 144.0)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        if self.kappa < 0:
            raise ParameterDomainError("kappa must be non-negative")
        if grid.ndim != 1 or grid.size == 0:
            raise ConfigurationError("grid must be a non-empty 1-D sequence")
        if np.any(np.diff(grid) <= 0):
            raise ConfigurationError("grid must be strictly increasing")
        lo, hi = self.bounds
        if not lo < hi or grid[0] < lo or grid[-1] > hi:
            raise ConfigurationError("grid must lie inside the gear-ratio bounds")


@dataclass(frozen=True)
class TerminationConfig:
    threshold: float = 5e-4
    repeats: int = 3
    cap: int = 50

    def __post_init__(self):
        if self.threshold <= 0:
            raise ConfigurationError("variance threshold must be positive")
        if self.repeats < 2 or self.cap < self.repeats:
            raise ConfigurationError("need repeats >= 2 and cap >= repeats")


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameter search used inside the loop.

    Every refit runs ``restarts`` random starts plus one start warm from the
    previous optimum.
    """

    prior: gp.HyperPrior = field(default_factory=gp.HyperPrior)
    restarts: int = 1
    max_iter: int = 200
    tol: float = 0.1


@dataclass(frozen=True)
class BOConfig:
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass
class Query:
    gear_ratio: float
    raw_score: float
    normalized_score: float = math.nan


@dataclass
class TaskResult:
    task: int
    label: str
    chosen: float
    history: list
    reason: str
    curve_mean: np.ndarray
    curve_var: np.ndarray
    grid: np.ndarray
    task_corr: np.ndarray | None = None
    initial_queries: int = 0

    @property
    def queries(self):
        return len(self.history)

    def to_json(self):
        return {
            "task_index": self.task,
            "task_label": self.label,
            "chosen_gear_ratio": self.chosen,
            "termination_reason": self.reason,
            "queries_used": self.queries,
            "initial_queries": self.initial_queries,
            "queries": [{"gear_ratio": q.gear_ratio, "raw_score": q.raw_score,
                         "normalized_score": q.normalized_score} for q in self.history],
            "posterior_curve": [{"gear_ratio": float(g), "mean": float(m), "variance": float(v)}
                                for g, m, v in zip(self.grid, self.curve_mean, self.curve_var)],
            "task_correlation": None if self.task_corr is None else self.task_corr.tolist(),
        }


class OracleError(RuntimeError):
    """An oracle call failed; ``history`` holds the queries made so far."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def ucb(p, kappa):
    if kappa < 0:
        raise ParameterDomainError("kappa must be non-negative")
    return p.mean + kappa * math.sqrt(max(p.var, 0.0))


def acquisition(model, task, cfg):
    mean, var = model.predict(cfg.grid, task)
    return mean + cfg.kappa * np.sqrt(var)


def select_next(model, task, cfg):
    """Grid maximizer of UCB; ties go to the lowest grid index."""
    if cfg.grid.size == 0:
        raise ConfigurationError("empty acquisition grid")
    return float(cfg.grid[int(np.argmax(acquisition(model, task, cfg)))])


def check_termination(model, task, history, cfg, grid):
    """Return the stop reason, or None to keep querying."""
    xs = [q.gear_ratio if isinstance(q, Query) else float(q) for q in history]
    if len(xs) >= cfg.repeats and len(set(xs[-cfg.repeats:])) == 1:
        return REPEAT
    if xs and model is not None:
        mean, var = model.predict(grid, task)
        if var[int(np.argmax(mean))] < cfg.threshold:
            return VARIANCE
    if len(xs) >= cfg.cap:
        return CAP
    return None


def initial_points(grid):
    """Minimum, median and maximum of the grid."""
    return [float(grid[0]), float(grid[(grid.size - 1) // 2]), float(grid[-1])]


@dataclass
class ModelState:
    """Everything carried between iterations and tasks."""

    data: gp.Dataset
    params: gp.MtgpHyperparams | None = None
    std: gp.Standardizer = field(default_factory=gp.Standardizer)
    fits: int = 0


def _refit(state, M, cfg, rng):
    model, std, res = gp.fit_model(
        state.data, cfg.fit.prior, cfg.fit.restarts, rng, M=M,
        warm_start=state.params, max_iter=cfg.fit.max_iter, tol=cfg.fit.tol)
    state.params, state.std = res.params, std
    state.fits += 1
    return model


def _evaluate(oracle, x, task, history):
    try:
        return float(oracle(x, task))
    except Exception as exc:
        raise OracleError(f"oracle failed at gear ratio {x} for task {task}: {exc}",
                          history) from exc


def optimize_task(oracle, task, state, cfg=BOConfig(), rng=None, label=""):
    """Run the acquisition loop for one task, appending to ``state.data``.

    ``oracle(gear_ratio, task)`` returns a raw score.  The first task ever
    seen starts with the three initialization points; later tasks start
    straight from the transferred posterior.
    """
    rng = np.random.default_rng(rng)
    grid = cfg.acquisition.grid
    M = max(state.data.M, task + 1)
    history = []

    def record(x):
        y = _evaluate(oracle, x, task, history)
        state.data.append(x, y, task)
        history.append(Query(float(x), y))
        log.info("trial %d task %d gear %.4f score %.6g",
                 state.data.T - 1, task, x, y)

    init = 0
    if state.data.T == 0:
        for x in initial_points(grid):
            record(x)
        init = len(history)

    while True:
        model = _refit(state, M, cfg, rng)
        record(select_next(model, task, cfg.acquisition))
        checked, _ = gp.condition(state.data, state.params)
        reason = check_termination(checked, task, history, cfg.termination, grid)
        if reason is None and len(history) >= cfg.termination.cap:
            reason = CAP
        if reason:
            break

    model = _refit(state, M, cfg, rng)
    mean, var = model.predict(grid, task)
    for q in history:
        q.normalized_score = float(state.std.transform(q.raw_score))
    state.data.labels[task] = label
    return TaskResult(
        task=task, label=label, chosen=float(grid[int(np.argmax(mean))]),
        history=history, reason=reason, curve_mean=mean, curve_var=var, grid=grid,
        task_corr=state.params.task_corr, initial_queries=init)


@dataclass
class SequenceResult:
    results: list
    state: ModelState

    @property
    def task_corr(self):
        return self.state.params.task_corr

    @property
    def total_queries(self):
        return sum(r.queries for r in self.results)


def run_sequence(oracle, tasks, cfg=BOConfig(), rng=None, labels=None):
    """Optimize ``tasks`` (task indices) in order, sharing all data."""
    tasks = list(tasks)
    if not tasks:
        raise ConfigurationError("no tasks to optimize")
    if len(set(tasks)) != len(tasks):
        raise ConfigurationError("duplicate task indices")
    rng = np.random.default_rng(rng)
    labels = labels or {}
    state = ModelState(gp.Dataset(x_bounds=cfg.acquisition.bounds))
    results = [optimize_task(oracle, t, state, cfg, rng, labels.get(t, str(t)))
               for t in tasks]
    return SequenceResult(results, state)
