"""CSV input loading and protocol-schema output writing."""
from __future__ import annotations

import csv
from typing import Optional, Sequence

import numpy as np


def load_table(path: str, target_column: Optional[str]):
    """Read a harness data CSV into (ids, X, y_raw).

    The first column must be sample_id; the target column, when named, is
    split out as raw strings (classification alphabets stay untouched) and
    everything else becomes a float feature matrix in file order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id":
            raise ValueError(f"{path}: expected a header starting with sample_id")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")

    feature_cols = [j for j, name in enumerate(header)
                    if j > 0 and name != target_column]
    if not feature_cols:
        raise ValueError(f"{path}: no feature columns")
    ids = [row[0] for row in rows]
    X = np.array([[float(row[j]) for j in feature_cols] for row in rows])
    y = None
    if target_column is not None and target_column in header:
        t = header.index(target_column)
        y = [row[t] for row in rows]
    return ids, X, y


def _fmt(v: float) -> str:
    return repr(float(v))


def write_importance(path: str, scores: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_index", "score"])
        for i, s in enumerate(scores):
            writer.writerow([i, _fmt(s)])


def write_labels(path: str, ids: Sequence[str], labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for sid, lab in zip(ids, labels):
            writer.writerow([sid, int(lab)])


def write_coords(path: str, ids: Sequence[str], coords: np.ndarray) -> None:
    rank = coords.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + [f"c{j + 1}" for j in range(rank)])
        for sid, row in zip(ids, coords):
            writer.writerow([sid] + [_fmt(v) for v in row])


def write_predictions(path: str, ids: Sequence[str], values, task: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "prediction"])
        for sid, v in zip(ids, values):
            writer.writerow([sid, str(v) if task == "classification" else _fmt(v)])
