"""Query ratio and hit rate of the benchmark as the trial noise level varies.

Usage: python scripts/noise_sweep.py [--levels 0.003,0.007,0.01,0.015] [--replicates N]
"""

import argparse
import time

import numpy as np

from gearbo import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", default="0.003,0.007,0.01,0.015")
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    print(f"{'noise':>7s} {'ratio':>6s} {'worst':>6s} {'hits':>6s} {'seconds':>8s}")
    for level in (float(x) for x in args.levels.split(",")):
        sim = bench.with_noise(bench.SimSetup(), level)
        t0 = time.perf_counter()
        reports = [bench.run_scenario(sc, sim=sim, workers=args.workers)
                   for sc in bench.make_scenarios(sim, replicates=args.replicates)]
        bo = np.concatenate([r.mtbo_totals() for r in reports])
        rs = np.concatenate([r.random_totals() for r in reports])
        worst = max(np.median(r.mtbo_totals()) / np.median(r.random_totals()) for r in reports)
        hits = np.mean([h for r in reports for row in r.rows for h in row.hits])
        print(f"{level:7.3f} {np.median(bo) / np.median(rs):6.3f} {worst:6.3f} {hits:6.3f} "
              f"{time.perf_counter() - t0:8.0f}")


if __name__ == "__main__":
    main()
