"""Tabulate brute-force and closed-form optima for every preset and task.

Usage: python scripts/export_ground_truth.py [--out DIR]

With ``--out`` the noiseless score curves are written as one CSV per
preset, one column per task.
"""

import argparse
import csv
import os

import numpy as np

from gearbo import harvester


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    grid = harvester.default_grid()
    step = grid[1] - grid[0]

    print(f"{'task':14s} {'argmax':>8s} {'analytic':>9s} {'steps':>6s} {'range':>9s}")
    for name, preset in harvester.PRESETS.items():
        tasks = harvester.task_grid(preset, noise_pct=0.0)
        curves = {}
        for task in tasks.values():
            best, curve = harvester.ground_truth(task, grid)
            star = harvester.analytic_optimum(task)
            curves[task.label] = curve
            dev = "-" if star is None else f"{abs(best - star) / step:.2f}"
            print(f"{task.label:14s} {best:8.2f} {star or float('nan'):9.2f} {dev:>6s} "
                  f"{np.ptp(curve):9.4f}")
        labels = list(curves)
        corr = np.corrcoef([curves[k] for k in labels])
        print(f"{name}: curve correlation min {corr.min():.3f}, "
              f"median {np.median(corr[np.triu_indices(len(labels), 1)]):.3f}")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, f"ground_truth_{name}.csv")
            with open(path, "w") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["gear_ratio"] + labels)
                for i, g in enumerate(grid):
                    w.writerow([repr(float(g))] + [repr(float(curves[k][i])) for k in labels])
            print("wrote", path)


if __name__ == "__main__":
    main()
