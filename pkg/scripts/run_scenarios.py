"""Run the scenario benchmark and print a per-scenario table.

Usage: python scripts/run_scenarios.py [--replicates N] [--noise PCT] [--out DIR]
"""

import argparse
import logging
import time

import numpy as np

from gearbo import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--noise", type=float, default=None,
                    help="noise as a fraction of each task's score range")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="also write the report files here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    sim = bench.with_noise(bench.SimSetup(), args.noise)
    t0 = time.perf_counter()
    reports = [bench.run_scenario(sc, sim=sim, workers=args.workers)
               for sc in bench.make_scenarios(sim, replicates=args.replicates,
                                              base_seed=args.seed)]
    elapsed = time.perf_counter() - t0

    print(f"{'scenario':26s} {'mtbo':>6s} {'random':>7s} {'ratio':>6s} {'hits':>8s}  task medians")
    for rep, row in zip(reports, bench.summarize(reports)):
        ratio = row["median_mtbo_queries"] / row["median_random_queries"]
        per_task = [float(np.median(r.mtbo_queries)) for r in rep.rows]
        print(f"{row['scenario']:26s} {row['median_mtbo_queries']:6.1f} "
              f"{row['median_random_queries']:7.1f} {ratio:6.3f} "
              f"{row['mtbo_hits']:3d}/{row['cells']:<4d}  {per_task}"
              f"{'  high-corr' if row['high_correlation'] else ''}")
    bo = np.concatenate([r.mtbo_totals() for r in reports])
    rs = np.concatenate([r.random_totals() for r in reports])
    hits = sum(sum(row.hits) for r in reports for row in r.rows)
    cells = sum(len(row.hits) for r in reports for row in r.rows)
    print(f"pooled median ratio {np.median(bo) / np.median(rs):.3f}, "
          f"hit rate {hits / cells:.3f}, {elapsed:.0f} s")
    if args.out:
        for path in bench.write_reports(reports, args.out):
            print("wrote", path)


if __name__ == "__main__":
    main()
