"""Command-line entry point.

``gearbo <mode> [--config PATH] [--seed N] [--out DIR] [--set KEY=VALUE]...``
where mode is one of ``optimize``, ``random-baseline``, ``scenario`` or
``ground-truth``.  Every oracle query is logged on one line to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bench, config, gp, harvester, mtbo, records
from .errors import ConfigurationError

log = logging.getLogger("gearbo")

MODES = ("optimize", "random-baseline", "scenario", "ground-truth")


@dataclass(frozen=True)
class RunConfig:
    mode: str
    config: str | None = None
    out: str = "results"
    seed: int = 0
    overrides: tuple = field(default_factory=tuple)
    workers: int = 1


def build_parser():
    p = argparse.ArgumentParser(
        prog="gearbo",
        description="Multi-task Bayesian optimization of a simulated knee harvester's gear ratio.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--out", metavar="DIR", default="results", help="output directory")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   dest="overrides", help="override one configuration key (repeatable)")
    p.add_argument("--workers", type=int, default=1,
                   help="processes for scenario replicates")
    return p


def parse_args(argv=None):
    """Validate ``argv``; the seed resolves as --seed, then config, then 0."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.mode == "scenario" and ns.config is None:
        parser.error("scenario mode requires --config")
    if ns.workers < 1:
        parser.error("--workers must be positive")
    seed = ns.seed
    if seed is None:
        try:
            seed = config.load(ns.config, ns.overrides).get("run.seed", 0)
        except (ConfigurationError, OSError) as exc:
            parser.error(str(exc))
    return RunConfig(ns.mode, ns.config, ns.out, int(seed), tuple(ns.overrides), ns.workers)


def _written(paths):
    for path in paths:
        log.info("wrote %s", path)
    return paths


def _oracle(tasks, settings, rng):
    sim = settings.sim
    return bench.make_oracle(tasks, sim.consts, sim.score, rng)


def run_optimize(settings, out):
    tasks = settings.run_tasks()
    model_ss, noise_ss = np.random.SeedSequence(settings.seed).spawn(2)
    labels = {k: t.label for k, t in enumerate(tasks)}
    seq = mtbo.run_sequence(_oracle(tasks, settings, np.random.default_rng(noise_ss)),
                            range(len(tasks)), settings.bo, np.random.default_rng(model_ss),
                            labels)
    os.makedirs(out, exist_ok=True)
    paths = [os.path.join(out, "results.json"), os.path.join(out, "dataset.csv"),
             os.path.join(out, "hyperparams.txt")]
    records.dump_json([r.to_json() for r in seq.results], paths[0])
    records.write_text(paths[1], records.dataset_csv(seq.state.data, seq.state.std))
    records.write_text(paths[2], gp.hyperparams_dump(seq.state.params, seq.state.std))
    for r in seq.results:
        log.info("task %d %s chosen %.4f after %d queries (%s)",
                 r.task, r.label, r.chosen, r.queries, r.reason)
    return _written(paths)


def run_random(settings, out):
    tasks = settings.run_tasks()
    draw_ss, noise_ss = np.random.SeedSequence(settings.seed).spawn(2)
    oracle = _oracle(tasks, settings, np.random.default_rng(noise_ss))
    rng = np.random.default_rng(draw_ss)
    bo = settings.bo
    results = [bench.random_search(oracle, bo.acquisition.grid, k, bo.termination, rng,
                                   bo.fit, bo.acquisition.bounds, t.label)
               for k, t in enumerate(tasks)]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "random_results.json")
    records.dump_json([r.to_json() for r in results], path)
    for r in results:
        log.info("task %d %s best %.4f after %d draws (%s)",
                 r.task, r.label, r.chosen, r.queries, r.reason)
    return _written([path])


def run_scenarios(settings, out, workers=1):
    reports = []
    for sc in settings.scenarios():
        log.info("scenario %s: %d replicates", sc.name, sc.replicates)
        reports.append(bench.run_scenario(sc, settings.bo, settings.sim,
                                          workers=settings.get("bench.workers", workers)))
    paths = bench.write_reports(reports, out)
    for row in bench.summarize(reports):
        log.info("%s: mtbo %.1f vs random %.1f queries (%.1f%% fewer), hits %d/%d",
                 row["scenario"], row["median_mtbo_queries"], row["median_random_queries"],
                 row["reduction_pct"], row["mtbo_hits"], row["cells"])
    return _written(paths)


def run_ground_truth(settings, out):
    sim = settings.sim
    name = settings.get("run.participant", "p1")
    if name not in sim.presets:
        raise ConfigurationError(f"unknown participant preset {name!r}")
    grid = settings.grid
    os.makedirs(out, exist_ok=True)
    paths = []
    for s in sim.slopes:
        for v in sim.speeds:
            task = harvester.make_profile(s, v, sim.presets[name], sim.consts, sim.score,
                                          grid=grid, noise_pct=0.0)
            best, curve = harvester.ground_truth(task, grid, sim.consts, sim.score)
            log.info("%s optimum %.4f", task.label, best)
            path = os.path.join(out, f"ground_truth_{name}_s{s:g}_v{v:g}.csv")
            records.write_text(path, records.curve_csv(grid, curve))
            paths.append(path)
    return _written(paths)


def execute(cfg):
    """Run one mode; returns the process exit status."""
    try:
        settings = config.load(cfg.config, cfg.overrides)
        settings = config.Settings({**settings.values, "run.seed": cfg.seed})
        if cfg.mode == "optimize":
            run_optimize(settings, cfg.out)
        elif cfg.mode == "random-baseline":
            run_random(settings, cfg.out)
        elif cfg.mode == "scenario":
            run_scenarios(settings, cfg.out, cfg.workers)
        else:
            run_ground_truth(settings, cfg.out)
    except (ConfigurationError, ValueError, ArithmeticError, OSError, mtbo.OracleError) as exc:
        print(f"gearbo: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    return execute(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
