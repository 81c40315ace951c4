"""Report figures.  Rendered straight from the score tables with the
object-oriented matplotlib API (no pyplot state), so output bytes are
reproducible run to run.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

SAVE_KW = {"dpi": 100, "metadata": {"Software": None}}  # no version stamp

TASK_LABELS = {
    "feature_importance": "feature importance",
    "clustering": "clustering",
    "dimension_reduction": "dimension reduction",
}


def _save(fig: Figure, path: Path) -> Path:
    fig.savefig(path, **SAVE_KW)
    return path


def _grid(tables: dict, table_dict: dict, cfg):
    datasets = [d["id"] for d in sorted(tables["datasets"],
                                        key=lambda d: (d["np_ratio"], d["id"]))
                if d["id"] in table_dict["datasets"]]
    methods = [m.id for m in cfg.methods if m.id in set(table_dict["methods"])]
    cells = {(c["dataset"], c["method"]): c["mean"] for c in table_dict["cells"]}
    M = np.full((len(methods), len(datasets)), np.nan)
    for i, m in enumerate(methods):
        for j, d in enumerate(datasets):
            v = cells.get((d, m))
            if v is not None:
                M[i, j] = v
    return datasets, methods, M


def heatmap(tables, table_dict, cfg, title: str, path: Path) -> Path:
    datasets, methods, M = _grid(tables, table_dict, cfg)
    fig = Figure(figsize=(1.2 + 0.9 * len(datasets), 1.0 + 0.5 * len(methods)))
    ax = fig.add_subplot()
    masked = np.ma.masked_invalid(M)
    cmap = matplotlib.colormaps["viridis"].copy()
    cmap.set_bad("0.85")
    im = ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(datasets)), datasets, rotation=30, ha="right")
    ax.set_yticks(range(len(methods)), methods)
    for i in range(len(methods)):
        for j in range(len(datasets)):
            if not masked.mask[i, j]:
                ax.text(j, i, f"{M[i, j]:.2f}", ha="center", va="center",
                        fontsize=8, color="white" if M[i, j] < 0.6 else "black")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    return _save(fig, path)


def bump_plot(tables, table_dict, cfg, title: str, path: Path) -> Path:
    from .report import competition_ranks

    datasets, methods, M = _grid(tables, table_dict, cfg)
    ranks = np.full_like(M, np.nan)
    for j in range(len(datasets)):
        col = competition_ranks([None if np.isnan(v) else v for v in M[:, j]])
        ranks[:, j] = [np.nan if r is None else r for r in col]
    fig = Figure(figsize=(1.5 + 0.9 * len(datasets), 1.0 + 0.5 * len(methods)))
    ax = fig.add_subplot()
    x = np.arange(len(datasets))
    for i, m in enumerate(methods):
        ax.plot(x, ranks[i], marker="o", label=m)
    ax.set_xticks(x, datasets, rotation=30, ha="right")
    ax.set_yticks(np.arange(1, len(methods) + 1))
    ax.invert_yaxis()  # rank 1 on top
    ax.set_ylabel("stability rank")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def line_sweep(rows, cfg, x_key: str, title: str, path: Path,
               unit_y: bool) -> Path:
    methods = [m.id for m in cfg.methods if any(r["method"] == m.id for r in rows)]
    fig = Figure()
    ax = fig.add_subplot()
    for m in methods:
        pts = [(r[x_key], r["value"]) for r in rows if r["method"] == m]
        xs = [p[0] for p in pts]
        ys = [np.nan if p[1] is None else p[1] for p in pts]
        ax.plot(xs, ys, marker="o", markersize=3, label=m)
    ax.set_xlabel(x_key)
    ax.set_ylabel("stability")
    if unit_y:
        ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def nn_curve_plot(entries, cfg, title: str, path: Path) -> Path:
    methods = [m.id for m in cfg.methods
               if any(e["method"] == m.id for e in entries)]
    fig = Figure()
    ax = fig.add_subplot()
    for m in methods:
        entry = next(e for e in entries if e["method"] == m)
        ax.plot(entry["x"], entry["mean"], label=m)
    ax.set_xlabel("neighborhood size fraction (k-1)/(N-1)")
    ax.set_ylabel("mean neighborhood Jaccard")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def association_plot(points, fits, task: str, path: Path) -> Path:
    fig = Figure()
    ax = fig.add_subplot()
    datasets = sorted({p["dataset"] for p in points})
    for d in datasets:
        pts = [p for p in points if p["dataset"] == d]
        xs = [p["accuracy"] for p in pts]
        ys = [p["stability"] for p in pts]
        line = ax.scatter(xs, ys, label=d, s=24)
        fit = next((f for f in fits if f["task"] == task
                    and f["panel"] == "by_dataset" and f["group"] == d), None)
        if fit is not None and len(xs) >= 2:
            gx = np.linspace(min(xs), max(xs), 20)
            ax.plot(gx, fit["intercept"] + fit["slope"] * gx,
                    color=line.get_facecolor()[0], linewidth=1, alpha=0.7)
    ax.set_xlabel("accuracy")
    ax.set_ylabel("stability")
    ax.set_title(f"stability vs accuracy ({TASK_LABELS[task]})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_figures(report_dir: Path, cfg, tables: dict, fits: list) -> list:
    fig_dir = report_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    out = []
    for task, table_dict in sorted(tables["within"].items()):
        label = TASK_LABELS[task]
        metric = table_dict["metric"]
        out.append(heatmap(tables, table_dict, cfg,
                           f"within-method stability ({label}, {metric})",
                           fig_dir / f"within_{task}.png"))
        if len(table_dict["methods"]) > 1 and len(table_dict["datasets"]) > 1:
            out.append(bump_plot(tables, table_dict, cfg,
                                 f"stability ranks ({label})",
                                 fig_dir / f"bump_{task}.png"))
    for name, x_key, unit_y in (("k", "k", False), ("sigma", "sigma", False),
                                ("rank", "rank", False)):
        rows = tables["sweeps"][name]
        for d in sorted({r["dataset"] for r in rows}):
            sub = [r for r in rows if r["dataset"] == d]
            out.append(line_sweep(sub, cfg, x_key,
                                  f"{d}: stability vs {x_key}",
                                  fig_dir / f"sweep_{name}_{d}.png", unit_y))
    curves = tables["nn_curves"]
    for d in sorted({e["dataset"] for e in curves}):
        sub = [e for e in curves if e["dataset"] == d]
        out.append(nn_curve_plot(sub, cfg, f"{d}: neighborhood stability",
                                 fig_dir / f"nn_curve_{d}.png"))
    for task in ("feature_importance", "clustering"):
        pts = [p for p in _points(tables, task)]
        if pts:
            out.append(association_plot(pts, fits, task,
                                        fig_dir / f"association_{task}.png"))
    return out


def _points(tables: dict, task: str) -> list:
    from .report import _association_points

    return _association_points(tables, task)
