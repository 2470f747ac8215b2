"""Persistence for observation logs, task results and fitted hyperparameters."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from . import gp

DATASET_FIELDS = ("trial_index", "gear_ratio", "raw_score", "normalized_score",
                  "task_index", "task_label")


def dataset_csv(data, std=None):
    """One row per observation; ``std`` defaults to a fit over all scores."""
    std = gp.Standardizer.fit(data.y) if std is None else std
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_FIELDS)
    for i, (x, y, t) in enumerate(zip(data.X, data.y, data.t)):
        w.writerow([i, repr(float(x)), repr(float(y)), repr(float(std.transform(y))), t,
                    data.labels.get(t, str(t))])
    return buf.getvalue()


def read_dataset_csv(text, x_bounds=(16.0, 144.0)):
    """Inverse of :func:`dataset_csv` on the raw scores."""
    rows = list(csv.DictReader(io.StringIO(text)))
    missing = set(DATASET_FIELDS) - set(rows[0] if rows else DATASET_FIELDS)
    if missing:
        raise ValueError(f"dataset CSV lacks columns {sorted(missing)}")
    rows.sort(key=lambda r: int(r["trial_index"]))
    data = gp.Dataset(x_bounds=x_bounds)
    for r in rows:
        k = int(r["task_index"])
        data.append(float(r["gear_ratio"]), float(r["raw_score"]), k)
        data.labels[k] = r["task_label"]
    return data


def task_result_json(result):
    return result.to_json()


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, default=_default)
        fh.write("\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def curve_csv(grid, values, header=("gear_ratio", "noiseless_score")):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for g, v in zip(grid, values):
        w.writerow([repr(float(g)), repr(float(v))])
    return buf.getvalue()


def write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return path
