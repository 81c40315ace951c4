"""Scoring: turn a run directory's artifacts into stability tables.

Re-scoring is cheap and non-destructive — metric choices (rank metric, K,
partition metric, nn metric) can be overridden without re-running methods.
Everything lands in ``scores/`` as CSV plus one ``tables.json``.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import fmt_float
from ..nnmetrics import nn_jaccard_auc
from ..rankmetrics import kendall_topk, overlap_profile
from ..runner import InvalidOutput, parse_interpretation, parse_predictions
from ..stability import (
    CellScore,
    StabilityTable,
    accuracy_classification,
    accuracy_clustering,
    accuracy_regression,
    between_method,
    between_prediction_classification,
    normalized_mse_scores,
    pairwise_mse,
    prediction_stability_classification,
    prediction_stability_regression,
    within_method,
)
from .config import MetricsConfig, PipelineConfig, from_json_dict
from .run import (
    Cell,
    DatasetBundle,
    dataset_ranks,
    enumerate_cells,
    headline_variant,
    load_datasets,
    plan_keys,
    read_plans,
)

log = logging.getLogger(__name__)

CURVE_REPEAT_CAP = 20  # nn curves are figure material; cap their pair count


def load_run_config(run_dir) -> PipelineConfig:
    path = Path(run_dir) / "config.json"
    return from_json_dict(json.loads(path.read_text()))


@dataclass
class CellData:
    """Parsed artifacts for one (dataset, method, variant) cell."""

    cell: Cell
    statuses: dict = field(default_factory=dict)  # repeat -> status string
    artifacts: dict = field(default_factory=dict)  # repeat -> artifact (ok only)
    preds: dict = field(default_factory=dict)  # repeat -> PredictionSet

    @property
    def n_ok(self) -> int:
        return len(self.artifacts)

    @property
    def usable(self) -> bool:
        # a cell where most repeats failed reports as missing, not as a
        # mean over the lucky survivors
        n = len(self.statuses)
        return n > 0 and self.n_ok >= 2 and (n - self.n_ok) * 2 <= n

    def ok_artifacts(self) -> list:
        return [self.artifacts[r] for r in sorted(self.artifacts)]


def _repeat_ids(bundle: DatasetBundle, plan, repeat):
    ids = bundle.data.sample_ids
    if plan.kind == "split":
        return ([ids[i] for i in repeat.train], [ids[i] for i in repeat.test])
    if plan.kind == "subsample":
        return [ids[i] for i in repeat.indices], None
    return list(ids), None


def _expected(cell: Cell, bundle: DatasetBundle, train_ids, test_ids) -> dict:
    if cell.task == "feature_importance":
        exp = {"n_features": bundle.data.n_features}
        if test_ids is not None:
            exp["test_ids"] = test_ids
            exp["target_task"] = bundle.cfg.task
            exp["class_names"] = (list(bundle.data.class_names)
                                  if bundle.data.class_names else None)
        return exp
    if cell.task == "clustering":
        return {"sample_ids": train_ids, "k": bundle.k}
    return {"sample_ids": train_ids, "rank": cell.rank}


def load_cell_data(run_dir: Path, cell: Cell, bundle: DatasetBundle, plan) -> CellData:
    cell_dir = run_dir / "artifacts" / cell.dataset_id / cell.method_id / cell.variant
    data = CellData(cell=cell)
    for repeat in plan.repeats:
        sidecar = cell_dir / f"{repeat.index}.json"
        if not sidecar.exists():
            data.statuses[repeat.index] = "missing"
            continue
        record = json.loads(sidecar.read_text())
        status = record.get("status", "missing")
        if status != "ok":
            data.statuses[repeat.index] = status
            continue
        train_ids, test_ids = _repeat_ids(bundle, plan, repeat)
        expected = _expected(cell, bundle, train_ids, test_ids)
        try:
            art = parse_interpretation(cell_dir / f"{repeat.index}.csv",
                                       cell.task, expected)
            preds_path = cell_dir / f"{repeat.index}.preds.csv"
            if preds_path.exists():
                data.preds[repeat.index] = parse_predictions(preds_path, expected)
        except (OSError, InvalidOutput) as exc:
            log.warning("%s repeat %d unreadable at score time: %s",
                        cell_dir, repeat.index, exc)
            data.statuses[repeat.index] = "invalid_output"
            continue
        data.statuses[repeat.index] = "ok"
        data.artifacts[repeat.index] = art
    return data


def _metric_for(task: str, metrics: MetricsConfig) -> str:
    if task == "feature_importance":
        return metrics.rank_metric
    if task == "clustering":
        return metrics.partition_metric
    return metrics.nn_metric


def _metric_params(metrics: MetricsConfig, seed: int) -> dict:
    return {
        "k": metrics.k,
        "kendall_p": metrics.kendall_p,
        "grid_size": metrics.grid_size,
        "sample_cap": metrics.sample_cap,
        "seed": seed,
    }


def _missing(metric: str, data: CellData) -> CellScore:
    return CellScore(mean=None, metric=metric, n_repeats=data.n_ok)


# -- sweeps -------------------------------------------------------------------

def _rank_sweep_values(arts: list, ks: list, metrics: MetricsConfig) -> list:
    """Mean rank-metric at every K in one pass per pair where possible."""
    kmax = min(max(ks), arts[0].order.size)
    ks = [k for k in ks if k <= kmax]
    if metrics.rank_metric == "kendall":
        out = []
        for k in ks:
            vals = [kendall_topk(a, b, k, metrics.kendall_p)
                    for i, a in enumerate(arts) for b in arts[i + 1:]]
            out.append((k, float(np.mean(vals))))
        return out
    acc = np.zeros(kmax)
    n_pairs = 0
    for i, a in enumerate(arts):
        for b in arts[i + 1:]:
            profile = overlap_profile(a.order, b.order, kmax).astype(float)
            depths = np.arange(1, kmax + 1)
            if metrics.rank_metric == "ao":
                acc += np.cumsum(profile / depths) / depths
            else:
                acc += profile / (2 * depths - profile)
            n_pairs += 1
    acc /= n_pairs
    return [(k, float(acc[k - 1])) for k in ks]


def _mean_nn_curve(arts: list, metrics: MetricsConfig, seed: int):
    """Average per-pair Jaccard curves on a shared x = (k-1)/(N-1) axis."""
    arts = arts[:CURVE_REPEAT_CAP]
    x_grid = np.linspace(0.0, 1.0, 101)
    curves = []
    for i, a in enumerate(arts):
        for b in arts[i + 1:]:
            shared = [s for s in a.sample_ids if s in set(b.sample_ids)]
            if len(shared) < 2:
                continue
            curve = nn_jaccard_auc(a.restrict(shared), b.restrict(shared),
                                   grid_size=metrics.grid_size,
                                   sample_cap=metrics.sample_cap, seed=seed)
            n = len(shared)
            x = (np.asarray(curve.k_grid, dtype=float) - 1.0) / (n - 1.0)
            curves.append(np.interp(x_grid, x, np.asarray(curve.scores)))
    if not curves:
        return None
    return x_grid, np.mean(curves, axis=0)


# -- score assembly -------------------------------------------------------------

def _fi_truth(bundle: DatasetBundle, preds) -> np.ndarray:
    pos = {sid: i for i, sid in enumerate(bundle.data.sample_ids)}
    idx = [pos[sid] for sid in preds.sample_ids]
    return bundle.data.target[idx]


def _clu_truth(bundle: DatasetBundle, art) -> np.ndarray:
    pos = {sid: i for i, sid in enumerate(bundle.data.sample_ids)}
    idx = [pos[sid] for sid in art.sample_ids]
    return bundle.truth[idx]


def score_run(
    run_dir,
    *,
    rank_metric: Optional[str] = None,
    k: Optional[int] = None,
    kendall_p: Optional[float] = None,
    partition_metric: Optional[str] = None,
    nn_metric: Optional[str] = None,
) -> dict:
    """Score a completed run; returns (and writes) the full table bundle."""
    run_dir = Path(run_dir)
    cfg = load_run_config(run_dir)
    overrides = {
        name: value
        for name, value in (
            ("rank_metric", rank_metric), ("k", k), ("kendall_p", kendall_p),
            ("partition_metric", partition_metric), ("nn_metric", nn_metric),
        )
        if value is not None
    }
    metrics = dataclasses.replace(cfg.metrics, **overrides)

    bundles = {b.id: b for b in load_datasets(cfg)}
    plans = read_plans(run_dir)
    cells = enumerate_cells(cfg, list(bundles.values()))
    data = {}
    for cell in cells:
        plan = plans[(cell.dataset_id, cell.plan_key)]
        data[(cell.dataset_id, cell.method_id, cell.variant)] = load_cell_data(
            run_dir, cell, bundles[cell.dataset_id], plan
        )
    params = _metric_params(metrics, cfg.seed)
    headline_key = plan_keys(cfg)[0]

    def headline(dataset_id, method_id):
        task = cfg.method(method_id).artifact_task
        tag = headline_variant(cfg, cfg.dataset(dataset_id), task)
        return data.get((dataset_id, method_id, tag))

    # within-method tables, one per artifact kind present
    within: dict = {}
    for cell in cells:
        cd = data[(cell.dataset_id, cell.method_id, cell.variant)]
        if cell.variant != headline_variant(cfg, cfg.dataset(cell.dataset_id), cell.task):
            continue
        metric = _metric_for(cell.task, metrics)
        table = within.setdefault(
            cell.task, StabilityTable(kind="within", metric=metric)
        )
        if cd.usable:
            score = within_method(cd.ok_artifacts(), metric, **params)
        else:
            score = _missing(metric, cd)
        table.set(cell.dataset_id, cell.method_id, score)

    # between-method rows per dataset (headline variant, aligned repeats)
    between_rows: dict = {}
    for d in cfg.datasets:
        for task in ("feature_importance", "clustering", "dimension_reduction"):
            ms = [m for m in cfg.methods if m.artifact_task == task
                  and headline(d.id, m.id) is not None]
            metric = _metric_for(task, metrics)
            for i, ma in enumerate(ms):
                for mb in ms[i + 1:]:
                    ca, cb = headline(d.id, ma.id), headline(d.id, mb.id)
                    common = sorted(set(ca.artifacts) & set(cb.artifacts))
                    if ca.usable and cb.usable and common:
                        score = between_method(
                            [ca.artifacts[r] for r in common],
                            [cb.artifacts[r] for r in common],
                            metric, **params,
                        )
                    else:
                        score = CellScore(mean=None, metric=metric,
                                          n_repeats=len(common))
                    between_rows.setdefault(task, []).append({
                        "dataset": d.id, "method_a": ma.id, "method_b": mb.id,
                        "value": score.mean, "metric": metric,
                        "n_repeats": score.n_repeats, "n_pairs": score.n_pairs,
                        "n_skipped": score.n_skipped,
                    })

    # accuracy tables (needs ground truth)
    accuracy: dict = {}
    for d in cfg.datasets:
        b = bundles[d.id]
        for m in cfg.methods:
            task = m.artifact_task
            cd = headline(d.id, m.id)
            if cd is None or task == "dimension_reduction":
                continue
            if task == "feature_importance":
                if not cd.preds:
                    continue  # no held-out predictions under subsampling
                if d.task == "classification":
                    vals = [accuracy_classification(p, _fi_truth(b, p))
                            for p in (cd.preds[r] for r in sorted(cd.preds))]
                else:
                    vals = [accuracy_regression(p, _fi_truth(b, p))
                            for p in (cd.preds[r] for r in sorted(cd.preds))]
                metric = "acc" if d.task == "classification" else "exp_neg_mse"
            else:
                if b.truth is None:
                    continue
                metric = metrics.partition_metric
                vals = [accuracy_clustering(a, _clu_truth(b, a), metric=metric)
                        for a in cd.ok_artifacts()]
            table = accuracy.setdefault(task, StabilityTable(kind="accuracy",
                                                             metric=metric))
            mean = float(np.mean(vals)) if vals and cd.usable else None
            table.set(d.id, m.id, CellScore(mean=mean, metric=metric,
                                            n_repeats=len(vals)))

    # prediction stability (feature-importance methods under splits)
    pred_within_rows: list = []
    pred_between_rows: list = []
    for d in cfg.datasets:
        fi = [m for m in cfg.methods if m.artifact_task == "feature_importance"
              and headline(d.id, m.id) is not None]
        fi = [m for m in fi if headline(d.id, m.id).preds]
        for m in fi:
            cd = headline(d.id, m.id)
            ps = [cd.preds[r] for r in sorted(cd.preds)]
            stat = (prediction_stability_classification(ps)
                    if d.task == "classification"
                    else prediction_stability_regression(ps))
            pred_within_rows.append({
                "dataset": d.id, "method": m.id,
                "value": stat.mean if cd.usable else None,
                "n_repeats": len(ps), "n_excluded": stat.n_excluded,
            })
        if len(fi) < 2:
            continue
        pairs = [(ma, mb) for i, ma in enumerate(fi) for mb in fi[i + 1:]]
        if d.task == "classification":
            for ma, mb in pairs:
                ca, cb = headline(d.id, ma.id), headline(d.id, mb.id)
                common = sorted(set(ca.preds) & set(cb.preds))
                value = between_prediction_classification(
                    [ca.preds[r] for r in common], [cb.preds[r] for r in common]
                ) if common else None
                pred_between_rows.append({
                    "dataset": d.id, "method_a": ma.id, "method_b": mb.id,
                    "value": value, "n_repeats": len(common),
                })
        else:
            # regression: min-max normalization spans method pairs, so the
            # MSE matrix must be assembled across all pairs first
            repeats = sorted(set().union(*(set(headline(d.id, m.id).preds)
                                           for m in fi)))
            M = np.full((len(pairs), len(repeats)), np.nan)
            for pi, (ma, mb) in enumerate(pairs):
                ca, cb = headline(d.id, ma.id), headline(d.id, mb.id)
                common = set(ca.preds) & set(cb.preds)
                seq_a = [ca.preds[r] for r in repeats if r in common]
                seq_b = [cb.preds[r] for r in repeats if r in common]
                if seq_a:
                    cols = [j for j, r in enumerate(repeats) if r in common]
                    M[pi, cols] = pairwise_mse(seq_a, seq_b)
            keep = ~np.all(np.isnan(M), axis=0)
            scores = (normalized_mse_scores(M[:, keep], scope=cfg.mse_norm_scope)
                      if np.any(keep) else np.full(len(pairs), np.nan))
            for pi, (ma, mb) in enumerate(pairs):
                value = None if np.isnan(scores[pi]) else float(scores[pi])
                pred_between_rows.append({
                    "dataset": d.id, "method_a": ma.id, "method_b": mb.id,
                    "value": value,
                    "n_repeats": int(np.sum(~np.isnan(M[pi]))),
                })

    # K sweep over top-K depth for rankings
    sweep_k_rows: list = []
    lo, hi = metrics.k_sweep
    for d in cfg.datasets:
        for m in cfg.methods:
            if m.artifact_task != "feature_importance":
                continue
            cd = headline(d.id, m.id)
            if cd is None or not cd.usable:
                continue
            ks = list(range(lo, hi + 1))
            for kk, value in _rank_sweep_values(cd.ok_artifacts(), ks, metrics):
                sweep_k_rows.append({"dataset": d.id, "method": m.id,
                                     "k": kk, "value": value})

    # sigma sweep: within-stability per noise level
    sweep_sigma_rows: list = []
    if cfg.perturbation.kind == "noise" and len(cfg.perturbation.sigmas) > 1:
        for d in cfg.datasets:
            for m in cfg.methods:
                task = m.artifact_task
                for si, sigma in enumerate(cfg.perturbation.sigmas):
                    tag = (f"s{si}" if task != "dimension_reduction"
                           else f"s{si}-r{cfg.dataset(d.id).rank}")
                    cd = data.get((d.id, m.id, tag))
                    if cd is None:
                        continue
                    metric = _metric_for(task, metrics)
                    value = (within_method(cd.ok_artifacts(), metric, **params).mean
                             if cd.usable else None)
                    sweep_sigma_rows.append({"dataset": d.id, "method": m.id,
                                             "sigma": sigma, "value": value})

    # rank sweep for embeddings
    sweep_rank_rows: list = []
    for d in cfg.datasets:
        ranks = sorted(dataset_ranks(cfg.dataset(d.id)))
        if len(ranks) < 2:
            continue
        for m in cfg.methods:
            if m.artifact_task != "dimension_reduction":
                continue
            for rank in ranks:
                tag = (f"r{rank}" if headline_key == "base"
                       else f"{headline_key}-r{rank}")
                cd = data.get((d.id, m.id, tag))
                if cd is None:
                    continue
                value = (within_method(cd.ok_artifacts(), metrics.nn_metric,
                                       **params).mean if cd.usable else None)
                sweep_rank_rows.append({"dataset": d.id, "method": m.id,
                                        "rank": rank, "value": value})

    # mean neighborhood-Jaccard curves (headline embeddings, figure feed)
    nn_curves: list = []
    for d in cfg.datasets:
        for m in cfg.methods:
            if m.artifact_task != "dimension_reduction":
                continue
            cd = headline(d.id, m.id)
            if cd is None or not cd.usable:
                continue
            curve = _mean_nn_curve(cd.ok_artifacts(), metrics, cfg.seed)
            if curve is None:
                continue
            x, y = curve
            nn_curves.append({"dataset": d.id, "method": m.id,
                              "x": [float(v) for v in x],
                              "mean": [float(v) for v in y]})

    cell_status = []
    for cell in cells:
        cd = data[(cell.dataset_id, cell.method_id, cell.variant)]
        counts: dict = {}
        for status in cd.statuses.values():
            counts[status] = counts.get(status, 0) + 1
        cell_status.append({
            "dataset": cell.dataset_id, "method": cell.method_id,
            "variant": cell.variant, "n_ok": cd.n_ok,
            "n_failed": len(cd.statuses) - cd.n_ok,
            "statuses": dict(sorted(counts.items())),
        })

    tables = {
        "version": 1,
        "metrics": {
            "rank_metric": metrics.rank_metric, "k": metrics.k,
            "kendall_p": metrics.kendall_p, "k_sweep": list(metrics.k_sweep),
            "partition_metric": metrics.partition_metric,
            "nn_metric": metrics.nn_metric, "grid_size": metrics.grid_size,
            "sample_cap": metrics.sample_cap,
        },
        "headline_plan": headline_key,
        "datasets": [
            {
                "id": b.id, "task": b.cfg.task,
                "n_samples": b.data.n_samples, "n_features": b.data.n_features,
                "np_ratio": b.data.n_samples / b.data.n_features,
            }
            for b in bundles.values()
        ],
        "within": {task: t.to_json_dict() for task, t in sorted(within.items())},
        "between": {task: rows for task, rows in sorted(between_rows.items())},
        "accuracy": {task: t.to_json_dict() for task, t in sorted(accuracy.items())},
        "prediction": {"within": pred_within_rows, "between": pred_between_rows},
        "sweeps": {"k": sweep_k_rows, "sigma": sweep_sigma_rows,
                   "rank": sweep_rank_rows},
        "nn_curves": nn_curves,
        "cell_status": cell_status,
    }
    write_scores(run_dir / "scores", tables, within, accuracy)
    return tables


# -- serialization ----------------------------------------------------------------

def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([
                "" if row[c] is None
                else fmt_float(row[c]) if isinstance(row[c], float)
                else row[c]
                for c in header
            ])


def write_scores(score_dir: Path, tables: dict, within: dict, accuracy: dict) -> None:
    score_dir.mkdir(parents=True, exist_ok=True)
    table_header = ["dataset", "method", "value", "metric",
                    "n_repeats", "n_pairs", "n_skipped"]
    for task, table in within.items():
        _write_csv(score_dir / f"within_{task}.csv", table_header, table.to_rows())
    for task, table in accuracy.items():
        _write_csv(score_dir / f"accuracy_{task}.csv", table_header, table.to_rows())
    between_header = ["dataset", "method_a", "method_b", "value", "metric",
                      "n_repeats", "n_pairs", "n_skipped"]
    for task, rows in tables["between"].items():
        _write_csv(score_dir / f"between_{task}.csv", between_header, rows)
    if tables["prediction"]["within"]:
        _write_csv(score_dir / "prediction_within.csv",
                   ["dataset", "method", "value", "n_repeats", "n_excluded"],
                   tables["prediction"]["within"])
    if tables["prediction"]["between"]:
        _write_csv(score_dir / "prediction_between.csv",
                   ["dataset", "method_a", "method_b", "value", "n_repeats"],
                   tables["prediction"]["between"])
    for name, header in (("k", ["dataset", "method", "k", "value"]),
                         ("sigma", ["dataset", "method", "sigma", "value"]),
                         ("rank", ["dataset", "method", "rank", "value"])):
        rows = tables["sweeps"][name]
        if rows:
            _write_csv(score_dir / f"sweep_{name}.csv", header, rows)
    if tables["nn_curves"]:
        rows = []
        for entry in tables["nn_curves"]:
            for x, y in zip(entry["x"], entry["mean"]):
                rows.append({"dataset": entry["dataset"], "method": entry["method"],
                             "x": x, "value": y})
        _write_csv(score_dir / "nn_curve.csv",
                   ["dataset", "method", "x", "value"], rows)
    (score_dir / "tables.json").write_text(json.dumps(tables, sort_keys=True,
                                                      indent=1))
