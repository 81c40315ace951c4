"""Reporting: turn scores/tables.json into the publication-shaped bundle.

Datasets are ordered by ascending N/P ratio (ties lexicographic) in every
table and figure; methods keep their config order.  The bundle is fully
deterministic: re-running report (or the whole pipeline with a different
worker count) reproduces identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

from ..stability import fit_association
from .config import PipelineConfig
from .run import config_hash
from .score import _write_csv, load_run_config

ASSOCIATION_TASKS = ("feature_importance", "clustering")


def _dataset_order(tables: dict) -> list:
    ds = tables["datasets"]
    return [d["id"] for d in sorted(ds, key=lambda d: (d["np_ratio"], d["id"]))]


def _table_cells(table_dict: dict) -> dict:
    return {(c["dataset"], c["method"]): c["mean"] for c in table_dict["cells"]}


def _method_order(cfg: PipelineConfig, table_dict: dict) -> list:
    present = set(table_dict["methods"])
    return [m.id for m in cfg.methods if m.id in present]


def _wide_rows(cfg, tables, table_dict) -> tuple:
    """Method-by-dataset grid with a trailing mean over present cells."""
    datasets = [d for d in _dataset_order(tables) if d in table_dict["datasets"]]
    cells = _table_cells(table_dict)
    rows = []
    for m in _method_order(cfg, table_dict):
        row = {"method": m}
        present = []
        for d in datasets:
            v = cells.get((d, m))
            row[d] = v
            if v is not None:
                present.append(v)
        row["average"] = sum(present) / len(present) if present else None
        rows.append(row)
    return ["method", *datasets, "average"], rows


def competition_ranks(values: list) -> list:
    """Rank descending with ties sharing the best rank: (.9,.5,.5) -> 1,2,2.

    None entries receive no rank.  The rank after a tie block skips ahead
    (1,2,2,4), matching standard competition ranking.
    """
    ranks: list = [None] * len(values)
    for i, v in enumerate(values):
        if v is None:
            continue
        ranks[i] = 1 + sum(1 for w in values if w is not None and w > v)
    return ranks


def _bump_rows(cfg, tables, table_dict) -> tuple:
    datasets = [d for d in _dataset_order(tables) if d in table_dict["datasets"]]
    cells = _table_cells(table_dict)
    methods = _method_order(cfg, table_dict)
    grid = {}
    for d in datasets:
        col = competition_ranks([cells.get((d, m)) for m in methods])
        for m, r in zip(methods, col):
            grid[(d, m)] = r
    rows = []
    for m in methods:
        row = {"method": m}
        present = []
        for d in datasets:
            r = grid[(d, m)]
            row[d] = r
            if r is not None:
                present.append(r)
        row["avg_rank"] = sum(present) / len(present) if present else None
        rows.append(row)
    return ["method", *datasets, "avg_rank"], rows


def _association_points(tables: dict, task: str) -> list:
    within = tables["within"].get(task)
    acc = tables["accuracy"].get(task)
    if within is None or acc is None:
        return []
    wc, ac = _table_cells(within), _table_cells(acc)
    points = []
    for key in sorted(wc):
        if wc[key] is not None and ac.get(key) is not None:
            points.append({"task": task, "dataset": key[0], "method": key[1],
                           "accuracy": ac[key], "stability": wc[key]})
    return points


def _fit_panel(points: list, task: str, panel: str, group_key: str) -> list:
    """One OLS fit per group; the Bonferroni m is the count of fits the
    panel actually produced (degenerate groups don't dilute correction)."""
    groups: dict = {}
    for p in points:
        groups.setdefault(p[group_key], []).append(p)
    fits = {}
    for g, pts in sorted(groups.items()):
        if len(pts) < 2:
            continue
        fit = fit_association([p["accuracy"] for p in pts],
                              [p["stability"] for p in pts])
        if fit is not None:
            fits[g] = fit
    m = len(fits)
    rows = []
    for g, fit in fits.items():
        p = fit.p_value
        rows.append({
            "task": task, "panel": panel, "group": g, "n": fit.n,
            "slope": fit.slope, "intercept": fit.intercept,
            "p_value": p,
            "p_corrected": None if p is None else min(1.0, p * m),
            "m_tests": m,
        })
    return rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_report(run_dir) -> dict:
    """Render report CSVs (+ figures) from an already-scored run directory."""
    run_dir = Path(run_dir)
    tables_path = run_dir / "scores" / "tables.json"
    if not tables_path.exists():
        raise FileNotFoundError(f"no scores at {tables_path}; run scoring first")
    tables = json.loads(tables_path.read_text())
    cfg = load_run_config(run_dir)
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    emitted = []

    def emit(name: str, header, rows):
        path = report_dir / name
        _write_csv(path, header, rows)
        emitted.append(path)

    for task, table_dict in sorted(tables["within"].items()):
        header, rows = _wide_rows(cfg, tables, table_dict)
        emit(f"within_{task}.csv", header, rows)
        header, rows = _bump_rows(cfg, tables, table_dict)
        emit(f"bump_{task}.csv", header, rows)
    for task, table_dict in sorted(tables["accuracy"].items()):
        header, rows = _wide_rows(cfg, tables, table_dict)
        emit(f"accuracy_{task}.csv", header, rows)
    for task, rows in sorted(tables["between"].items()):
        emit(f"between_{task}.csv",
             ["dataset", "method_a", "method_b", "value", "metric",
              "n_repeats", "n_pairs", "n_skipped"], rows)
    if tables["prediction"]["within"]:
        emit("prediction_within.csv",
             ["dataset", "method", "value", "n_repeats", "n_excluded"],
             tables["prediction"]["within"])
    if tables["prediction"]["between"]:
        emit("prediction_between.csv",
             ["dataset", "method_a", "method_b", "value", "n_repeats"],
             tables["prediction"]["between"])

    points: list = []
    fits: list = []
    for task in ASSOCIATION_TASKS:
        task_points = _association_points(tables, task)
        points.extend(task_points)
        fits.extend(_fit_panel(task_points, task, "by_dataset", "dataset"))
        fits.extend(_fit_panel(task_points, task, "by_method", "method"))
    if points:
        emit("association_points.csv",
             ["task", "dataset", "method", "accuracy", "stability"], points)
    if fits:
        emit("associations.csv",
             ["task", "panel", "group", "n", "slope", "intercept",
              "p_value", "p_corrected", "m_tests"], fits)

    if cfg.figures:
        from .figures import render_figures

        emitted.extend(render_figures(report_dir, cfg, tables, fits))

    plan_hashes = {}
    from .run import read_plans

    for (dataset_id, key), plan in sorted(read_plans(run_dir).items()):
        plan_hashes[f"{dataset_id}-{key}"] = plan.content_hash()
    index = {
        "version": 1,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "dataset_order": _dataset_order(tables),
        "datasets": sorted(tables["datasets"], key=lambda d: (d["np_ratio"], d["id"])),
        "metrics": tables["metrics"],
        "plans": plan_hashes,
        "cells": tables["cell_status"],
        "versions": {
            "python": platform.python_version(),
            **_package_versions(),
        },
        "files": {
            str(p.relative_to(report_dir)): _sha256(p) for p in sorted(emitted)
        },
    }
    (report_dir / "index.json").write_text(json.dumps(index, sort_keys=True,
                                                      indent=1))
    return index


def _package_versions() -> dict:
    import matplotlib
    import numpy
    import scipy

    import stabx

    return {
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "stabx": stabx.__version__,
    }
