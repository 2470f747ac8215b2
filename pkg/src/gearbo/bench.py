"""Paired benchmark of multi-task BO against a uniform random-search baseline.

Scenarios follow the two families of the treadmill study: three slopes at a
fixed speed, or three speeds at a fixed slope, each for two simulated
participants.  Within a replicate both arms see the same oracle, the same
noise scale and the same termination rules; random search stops when a
single-task GP fitted to its own samples satisfies them.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gp, harvester, mtbo

log = logging.getLogger(__name__)

MULTI_SLOPE, MULTI_SPEED = "multi-slope", "multi-speed"
SECONDS_PER_TRIAL = 120.0


@dataclass(frozen=True)
class Scenario:
    family: str
    fixed: float
    tasks: tuple
    participant: str = "p1"
    replicates: int = 20
    base_seed: int = 0

    def __post_init__(self):
        if self.family not in (MULTI_SLOPE, MULTI_SPEED):
            raise mtbo.ConfigurationError(f"unknown scenario family {self.family!r}")
        if len(self.tasks) == 0 or len(set(self.tasks)) != len(self.tasks):
            raise mtbo.ConfigurationError("scenario tasks must be distinct and non-empty")
        varying = "speed" if self.family == MULTI_SLOPE else "slope"
        fixed_attr = "speed" if varying == "speed" else "slope"
        if any(getattr(t, varying) != self.fixed for t in self.tasks):
            raise mtbo.ConfigurationError(
                f"{self.family} scenario must hold {fixed_attr} at {self.fixed}")
        if self.replicates < 1:
            raise mtbo.ConfigurationError("need at least one replicate")

    @property
    def name(self):
        unit = "mps" if self.family == MULTI_SLOPE else "deg"
        return f"{self.participant}-{self.family}-{self.fixed:g}{unit}"


@dataclass(frozen=True)
class SimSetup:
    consts: harvester.DeviceConstants = field(default_factory=harvester.DeviceConstants)
    score: harvester.ScoreConfig = field(default_factory=harvester.ScoreConfig)
    presets: dict = field(default_factory=lambda: dict(harvester.PRESETS))
    noise_pct: float | None = None
    slopes: tuple = harvester.SLOPES
    speeds: tuple = harvester.SPEEDS


def make_scenarios(sim=SimSetup(), participants=("p1", "p2"),
                   families=(MULTI_SLOPE, MULTI_SPEED), replicates=20, base_seed=0):
    """The 2 families x 3 fixed values grid for every participant preset."""
    out = []
    for p in participants:
        preset = sim.presets[p]

        def prof(s, v):
            return harvester.make_profile(s, v, preset, sim.consts, sim.score,
                                          noise_pct=sim.noise_pct)

        for fam in families:
            fixed_values = sim.speeds if fam == MULTI_SLOPE else sim.slopes
            for fixed in fixed_values:
                if fam == MULTI_SLOPE:
                    tasks = tuple(prof(s, fixed) for s in sim.slopes)
                else:
                    tasks = tuple(prof(fixed, v) for v in sim.speeds)
                out.append(Scenario(fam, float(fixed), tasks, p, replicates, base_seed))
    return out


def make_oracle(tasks, consts, score_cfg, rng):
    """Oracle over task indices drawing trial noise from ``rng``."""

    def oracle(g, k):
        return harvester.trial_score(g, tasks[k], consts, score_cfg, rng).score

    return oracle


def random_search(oracle, grid, task, termination=mtbo.TerminationConfig(), rng=None,
                  fit=mtbo.FitConfig(), bounds=None, label=""):
    """Uniform draws with replacement, stopped by the BO termination rules.

    The stopping rules are evaluated on a single-task GP fitted to the
    baseline's own samples; the chosen gear ratio is the best sample seen.
    """
    rng = np.random.default_rng(rng)
    grid = np.asarray(grid, dtype=float)
    if bounds is None:
        bounds = (float(grid[0]), float(grid[-1])) if grid[-1] > grid[0] else (grid[0] - 1, grid[0] + 1)
    data = gp.Dataset(x_bounds=bounds)
    history = []
    params = None
    reason = None
    while reason is None:
        x = float(grid[rng.integers(grid.size)])
        y = mtbo._evaluate(oracle, x, task, history)
        data.append(x, y, 0)
        history.append(mtbo.Query(x, y))
        log.info("trial %d task %d gear %.4f score %.6g", data.T - 1, task, x, y)
        model, std, res = gp.fit_model(data, fit.prior, fit.restarts, rng, M=1,
                                       warm_start=params, max_iter=fit.max_iter, tol=fit.tol)
        params = res.params
        reason = mtbo.check_termination(model, 0, history, termination, grid)
    mean, var = model.predict(grid, 0)
    for q in history:
        q.normalized_score = float(std.transform(q.raw_score))
    best = max(history, key=lambda q: q.raw_score)
    return mtbo.TaskResult(task=task, label=label, chosen=best.gear_ratio, history=history,
                           reason=reason, curve_mean=mean, curve_var=var, grid=grid)


def best_so_far(result):
    out, best = [], -np.inf
    for q in result.history:
        best = max(best, q.raw_score)
        out.append(best)
    return out


@dataclass
class Replicate:
    seed: int
    mtbo: list
    random: list
    task_corr: np.ndarray


def replicate_seeds(base_seed, replicates):
    return [int(s.generate_state(1)[0]) for s in
            np.random.SeedSequence(base_seed).spawn(replicates)]


def run_replicate(sc, seed, cfg=mtbo.BOConfig(), sim=SimSetup()):
    grid = cfg.acquisition.grid
    ss = np.random.SeedSequence(seed)
    bo_model, bo_noise, rs_draws, rs_noise = ss.spawn(4)
    labels = {k: t.label for k, t in enumerate(sc.tasks)}
    seq = mtbo.run_sequence(
        make_oracle(sc.tasks, sim.consts, sim.score, np.random.default_rng(bo_noise)),
        range(len(sc.tasks)), cfg, np.random.default_rng(bo_model), labels)
    rs_oracle = make_oracle(sc.tasks, sim.consts, sim.score, np.random.default_rng(rs_noise))
    draw_rng = np.random.default_rng(rs_draws)
    rand = [random_search(rs_oracle, grid, k, cfg.termination, draw_rng, cfg.fit,
                          cfg.acquisition.bounds, labels[k])
            for k in range(len(sc.tasks))]
    return Replicate(seed, seq.results, rand, seq.task_corr)


@dataclass
class TaskRow:
    task: int
    label: str
    truth: float
    mtbo_queries: list
    random_queries: list
    chosen: list
    random_chosen: list
    hits: list
    random_hits: list
    reasons: list


@dataclass
class ScenarioReport:
    name: str
    family: str
    fixed: float
    participant: str
    seeds: list
    grid_step: float
    rows: list
    task_corr: list
    truth_corr: np.ndarray
    curves: dict = field(default_factory=dict, repr=False)

    @property
    def high_correlation(self):
        """All pairs of ground-truth curves have Pearson correlation >= 0.9."""
        off = self.truth_corr[~np.eye(len(self.rows), dtype=bool)]
        return bool(np.all(off >= 0.9))

    def mtbo_totals(self):
        return np.sum([r.mtbo_queries for r in self.rows], axis=0)

    def random_totals(self):
        return np.sum([r.random_queries for r in self.rows], axis=0)

    def median_task_corr(self):
        return np.median(np.array(self.task_corr), axis=0)

    def to_json(self):
        return {
            "scenario": self.name,
            "family": self.family,
            "fixed_value": self.fixed,
            "participant": self.participant,
            "seeds": self.seeds,
            "grid_step": self.grid_step,
            "high_correlation": self.high_correlation,
            "ground_truth_correlation": self.truth_corr.tolist(),
            "median_learned_correlation": self.median_task_corr().tolist(),
            "learned_correlation": [np.asarray(c).tolist() for c in self.task_corr],
            "median_total_queries": {"mtbo": float(np.median(self.mtbo_totals())),
                                     "random": float(np.median(self.random_totals()))},
            "tasks": [{
                "task_index": r.task,
                "task_label": r.label,
                "ground_truth_gear_ratio": r.truth,
                "mtbo_queries": r.mtbo_queries,
                "random_queries": r.random_queries,
                "median_mtbo_queries": float(np.median(r.mtbo_queries)),
                "median_random_queries": float(np.median(r.random_queries)),
                "chosen_gear_ratio": r.chosen,
                "random_chosen_gear_ratio": r.random_chosen,
                "hit": r.hits,
                "random_hit": r.random_hits,
                "hit_rate": float(np.mean(r.hits)),
                "termination_reason": r.reasons,
            } for r in self.rows],
        }


def is_hit(chosen, truth, step):
    return bool(abs(chosen - truth) <= step * (1 + 1e-9))


def _replicate_job(args):
    return run_replicate(*args)


def run_scenario(sc, cfg=mtbo.BOConfig(), sim=SimSetup(), workers=1):
    """Run every replicate of ``sc`` and aggregate them into a report."""
    grid = cfg.acquisition.grid
    step = float(grid[1] - grid[0]) if grid.size > 1 else 0.0
    truths, curves = zip(*(harvester.ground_truth(t, grid, sim.consts, sim.score)
                           for t in sc.tasks))
    seeds = replicate_seeds(sc.base_seed + _scenario_offset(sc), sc.replicates)
    jobs = [(sc, s, cfg, sim) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            reps = list(ex.map(_replicate_job, jobs))
    else:
        reps = [_replicate_job(j) for j in jobs]

    rows = []
    for k, task in enumerate(sc.tasks):
        bo = [r.mtbo[k] for r in reps]
        rs = [r.random[k] for r in reps]
        rows.append(TaskRow(
            task=k, label=task.label, truth=truths[k],
            mtbo_queries=[r.queries for r in bo], random_queries=[r.queries for r in rs],
            chosen=[r.chosen for r in bo], random_chosen=[r.chosen for r in rs],
            hits=[is_hit(r.chosen, truths[k], step) for r in bo],
            random_hits=[is_hit(r.chosen, truths[k], step) for r in rs],
            reasons=[r.reason for r in bo]))
    report = ScenarioReport(
        name=sc.name, family=sc.family, fixed=sc.fixed, participant=sc.participant,
        seeds=seeds, grid_step=step, rows=rows, task_corr=[r.task_corr for r in reps],
        truth_corr=np.corrcoef(np.array(curves)))
    report.curves = {
        "ground_truth": {task.label: c for task, c in zip(sc.tasks, curves)},
        "posterior": {task.label: (reps[0].mtbo[k].curve_mean, reps[0].mtbo[k].curve_var)
                      for k, task in enumerate(sc.tasks)},
        "grid": grid,
    }
    return report


def _scenario_offset(sc):
    # stable across runs, unlike hash()
    return sum(ord(c) * (i + 1) for i, c in enumerate(sc.name))


def summarize(reports):
    """One summary row per scenario."""
    if not reports:
        raise ValueError("no reports to summarize")
    rows = []
    for rep in reports:
        bo = float(np.median(rep.mtbo_totals()))
        rs = float(np.median(rep.random_totals()))
        hits = sum(sum(r.hits) for r in rep.rows)
        cells = sum(len(r.hits) for r in rep.rows)
        rows.append({
            "scenario": rep.name,
            "median_mtbo_queries": bo,
            "median_random_queries": rs,
            "reduction_pct": reduction_pct(bo, rs),
            "mtbo_hits": hits,
            "cells": cells,
            "mtbo_minutes": bo * SECONDS_PER_TRIAL / 60,
            "random_minutes": rs * SECONDS_PER_TRIAL / 60,
            "high_correlation": rep.high_correlation,
        })
    return rows


def reduction_pct(mtbo_count, random_count):
    return (1.0 - mtbo_count / random_count) * 100.0 if random_count else 0.0


SUMMARY_FIELDS = ("scenario", "median_mtbo_queries", "median_random_queries",
                  "reduction_pct", "mtbo_hits", "cells", "mtbo_minutes",
                  "random_minutes", "high_correlation")


def summary_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_reports(reports, out_dir):
    """Write the JSON report, the summary table and curve CSVs; return the paths."""
    os.makedirs(os.path.join(out_dir, "curves"), exist_ok=True)
    paths = []
    path = os.path.join(out_dir, "scenario_report.json")
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths.append(path)
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w") as fh:
        fh.write(summary_csv(summarize(reports)))
    paths.append(path)
    for rep in reports:
        grid = rep.curves["grid"]
        path = os.path.join(out_dir, "curves", f"{rep.name}.csv")
        with open(path, "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            labels = list(rep.curves["ground_truth"])
            header = ["gear_ratio"]
            for lab in labels:
                header += [f"{lab}:truth", f"{lab}:mean", f"{lab}:variance"]
            w.writerow(header)
            for i, g in enumerate(grid):
                row = [repr(float(g))]
                for lab in labels:
                    mean, var = rep.curves["posterior"][lab]
                    row += [repr(float(rep.curves["ground_truth"][lab][i])),
                            repr(float(mean[i])), repr(float(var[i]))]
                w.writerow(row)
        paths.append(path)
    return paths


def with_noise(sim, noise_pct):
    return dataclasses.replace(sim, noise_pct=noise_pct)
