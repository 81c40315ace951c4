"""Aggregation layer: within/between-method stability, prediction
stability, accuracy, and accuracy-vs-stability association fits.

Scores aggregate per (dataset, method) cell; cells whose repeats failed or
whose comparisons were all skipped stay explicitly missing (None), never 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import betainc

from .core import (
    ClusterLabeling,
    Embedding,
    FeatureRanking,
    PredictionSet,
    artifact_task,
    fmt_float,
)
from . import nnmetrics, partmetrics, rankmetrics

log = logging.getLogger(__name__)

RANK_METRICS = ("jaccard", "ao", "kendall")
EMBED_METRICS = ("nn_auc", "nn_jaccard")


@dataclass(frozen=True)
class CellScore:
    """One aggregate stability cell plus its bookkeeping."""

    mean: Optional[float]
    metric: str
    n_repeats: int
    n_pairs: int = 0
    n_skipped: int = 0

    @property
    def missing(self) -> bool:
        return self.mean is None


def _rank_metric(metric: str, params: dict) -> Callable:
    k = int(params.get("k", 10))
    if metric == "jaccard":
        return lambda a, b: rankmetrics.jaccard_at_k(a, b, k)
    if metric == "ao":
        return lambda a, b: rankmetrics.average_overlap(a, b, k)
    if metric == "kendall":
        p = float(params.get("kendall_p", 0.0))
        return lambda a, b: rankmetrics.kendall_topk(a, b, k, p)
    raise ValueError(f"unknown rank metric {metric!r}")


def _partition_metric(metric: str):
    try:
        return partmetrics.PARTITION_METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown partition metric {metric!r}") from None


def _pair_score(a, b, metric: str, params: dict) -> Optional[float]:
    """Metric value for one artifact pair, or None when incomparable."""
    task = artifact_task(a)
    if task != artifact_task(b):
        raise ValueError("cannot compare artifacts of different kinds")
    if task == "feature_importance":
        return _rank_metric(metric, params)(a, b)
    # labelings/embeddings over differing subsamples compare on shared ids
    shared = [s for s in a.sample_ids if s in set(b.sample_ids)]
    if task == "clustering":
        if len(shared) < 2:
            return None
        return _partition_metric(metric)(a.restrict(shared), b.restrict(shared))
    if metric not in EMBED_METRICS:
        raise ValueError(f"unknown embedding metric {metric!r}")
    if len(shared) < 2:
        return None
    ea, eb = a.restrict(shared), b.restrict(shared)
    if metric == "nn_auc":
        return nnmetrics.nn_jaccard_auc(
            ea,
            eb,
            grid_size=int(params.get("grid_size", 50)),
            sample_cap=int(params.get("sample_cap", 500)),
            seed=int(params.get("seed", 0)),
        ).auc
    k = int(params.get("k", 10))
    k = min(k, len(shared) - 1)
    return nnmetrics.nn_jaccard_at_k(
        ea, eb, k,
        sample_cap=int(params.get("sample_cap", 500)),
        seed=int(params.get("seed", 0)),
    )


def within_method(artifacts: Sequence, metric: str, **params) -> CellScore:
    """Mean of the metric over all C(R,2) unordered artifact pairs.

    Pairs whose shared-sample intersection is too small to score are
    skipped and counted; a cell where every pair was skipped is missing.
    """
    if len(artifacts) < 2:
        raise ValueError("within-method stability needs at least 2 artifacts")
    scores = []
    skipped = 0
    for i in range(len(artifacts)):
        for j in range(i + 1, len(artifacts)):
            s = _pair_score(artifacts[i], artifacts[j], metric, params)
            if s is None:
                skipped += 1
            else:
                scores.append(s)
    mean = float(np.mean(scores)) if scores else None
    if mean is None:
        log.warning("all %d pairs skipped; cell is missing", skipped)
    return CellScore(
        mean=mean,
        metric=metric,
        n_repeats=len(artifacts),
        n_pairs=len(scores),
        n_skipped=skipped,
    )


def between_method(
    artifacts_a: Sequence,
    artifacts_b: Sequence,
    metric: str,
    *,
    plan_hash_a: Optional[str] = None,
    plan_hash_b: Optional[str] = None,
    **params,
) -> CellScore:
    """Mean of the metric over aligned repeats of two methods.

    Repeat i of both sequences must come from the same perturbation plan;
    mismatched plan hashes are an error, not a warning.
    """
    if plan_hash_a is not None and plan_hash_b is not None and plan_hash_a != plan_hash_b:
        raise ValueError("between-method comparison across different perturbation plans")
    if len(artifacts_a) != len(artifacts_b):
        raise ValueError(
            f"repeat counts differ ({len(artifacts_a)} vs {len(artifacts_b)})"
        )
    if not artifacts_a:
        raise ValueError("between-method stability needs at least 1 repeat")
    scores = []
    skipped = 0
    for a, b in zip(artifacts_a, artifacts_b):
        s = _pair_score(a, b, metric, params)
        if s is None:
            skipped += 1
        else:
            scores.append(s)
    mean = float(np.mean(scores)) if scores else None
    return CellScore(
        mean=mean,
        metric=metric,
        n_repeats=len(artifacts_a),
        n_pairs=len(scores),
        n_skipped=skipped,
    )


# -- prediction stability ---------------------------------------------------

@dataclass(frozen=True)
class PredictionStability:
    mean: Optional[float]
    per_sample: dict
    n_excluded: int  # samples seen fewer than twice across repeats


def _collect_by_sample(preds: Sequence[PredictionSet]) -> dict:
    by_sample: dict = {}
    for p in preds:
        for sid, v in zip(p.sample_ids, p.values):
            by_sample.setdefault(sid, []).append(v)
    return by_sample


def prediction_stability_classification(preds: Sequence[PredictionSet]) -> PredictionStability:
    """exp(-entropy) of each sample's predicted-label proportions, averaged.

    Entropy is in nats; samples appearing in fewer than two test sets carry
    no stability information and are excluded (counted).
    """
    by_sample = _collect_by_sample(preds)
    per_sample = {}
    excluded = 0
    for sid, values in by_sample.items():
        if len(values) < 2:
            excluded += 1
            continue
        counts = np.bincount(np.asarray(values, dtype=int))
        p = counts[counts > 0] / len(values)
        entropy = float(-(p * np.log(p)).sum())
        per_sample[sid] = math.exp(-entropy)
    mean = float(np.mean(list(per_sample.values()))) if per_sample else None
    return PredictionStability(mean=mean, per_sample=per_sample, n_excluded=excluded)


def prediction_stability_regression(preds: Sequence[PredictionSet]) -> PredictionStability:
    """exp(-sd) of each sample's predictions across repeats, averaged (ddof=1)."""
    by_sample = _collect_by_sample(preds)
    per_sample = {}
    excluded = 0
    for sid, values in by_sample.items():
        if len(values) < 2:
            excluded += 1
            continue
        sd = float(np.std(np.asarray(values, dtype=float), ddof=1))
        per_sample[sid] = math.exp(-sd)
    mean = float(np.mean(list(per_sample.values()))) if per_sample else None
    return PredictionStability(mean=mean, per_sample=per_sample, n_excluded=excluded)


def _paired_values(a: PredictionSet, b: PredictionSet):
    shared = [s for s in a.sample_ids if s in set(b.sample_ids)]
    if not shared:
        return None, None
    return a.restrict(shared).values, b.restrict(shared).values


def between_prediction_classification(
    preds_a: Sequence[PredictionSet], preds_b: Sequence[PredictionSet]
) -> Optional[float]:
    """Mean over repeats of the fraction of equal predicted labels."""
    if len(preds_a) != len(preds_b):
        raise ValueError("repeat counts differ")
    scores = []
    for a, b in zip(preds_a, preds_b):
        va, vb = _paired_values(a, b)
        if va is None:
            continue
        scores.append(float(np.mean(va == vb)))
    return float(np.mean(scores)) if scores else None


def pairwise_mse(preds_a: Sequence[PredictionSet], preds_b: Sequence[PredictionSet]) -> np.ndarray:
    """Per-repeat MSE between two aligned regression prediction sequences."""
    if len(preds_a) != len(preds_b):
        raise ValueError("repeat counts differ")
    out = np.full(len(preds_a), np.nan)
    for i, (a, b) in enumerate(zip(preds_a, preds_b)):
        va, vb = _paired_values(a, b)
        if va is None:
            continue
        d = va - vb
        out[i] = float(np.mean(d * d))
    return out


def normalized_mse_scores(mse: np.ndarray, *, scope: str = "per_repeat") -> np.ndarray:
    """1 - mean min-max-normalized MSE for each method pair.

    ``mse`` is (n_pairs, n_repeats).  The default scope normalizes across
    the method pairs within each repeat (columns); ``per_pair`` normalizes
    each pair's MSE across its own repeats instead (the alternative reading).
    A degenerate range normalizes to 0, i.e. contributes score 1 (flagged).
    """
    M = np.asarray(mse, dtype=float)
    if M.ndim != 2:
        raise ValueError("mse must be (n_pairs, n_repeats)")
    if scope not in ("per_repeat", "per_pair"):
        raise ValueError(f"unknown normalization scope {scope!r}")
    axis = 0 if scope == "per_repeat" else 1
    lo = np.nanmin(M, axis=axis, keepdims=True)
    hi = np.nanmax(M, axis=axis, keepdims=True)
    span = hi - lo
    degenerate = span == 0.0
    if np.any(degenerate):
        log.info("min-max normalization degenerate in %d slices; scores default to 1",
                 int(degenerate.sum()))
    norm = np.where(degenerate, 0.0, (M - lo) / np.where(span == 0.0, 1.0, span))
    with np.errstate(invalid="ignore"):
        scores = 1.0 - np.nanmean(norm, axis=1)
    return scores


# -- accuracy ----------------------------------------------------------------

def accuracy_classification(preds: PredictionSet, truth: np.ndarray) -> float:
    """Fraction of correct labels; truth aligned with preds.sample_ids."""
    truth = np.asarray(truth, dtype=int)
    if truth.shape != preds.values.shape:
        raise ValueError("truth must align with predictions")
    return float(np.mean(preds.values == truth))


def accuracy_regression(preds: PredictionSet, truth: np.ndarray) -> float:
    """exp(-MSE): maps error to (0, 1], nearly linear for small MSE."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != preds.values.shape:
        raise ValueError("truth must align with predictions")
    d = preds.values - truth
    return float(math.exp(-float(np.mean(d * d))))


def accuracy_clustering(labels: ClusterLabeling, truth, metric: str = "ari") -> float:
    """Partition metric (default ARI) between a labeling and ground truth."""
    fn = _partition_metric(metric)
    if isinstance(truth, ClusterLabeling):
        shared = [s for s in labels.sample_ids if s in set(truth.sample_ids)]
        return float(fn(labels.restrict(shared), truth.restrict(shared)))
    return float(fn(labels.labels, np.asarray(truth, dtype=int)))


# -- association --------------------------------------------------------------

@dataclass(frozen=True)
class AssociationFit:
    slope: float
    intercept: float
    p_value: Optional[float]
    p_corrected: Optional[float]
    n: int

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "p_value": self.p_value,
            "p_corrected": self.p_corrected,
            "n": self.n,
        }


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the incomplete beta."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def fit_association(x, y, m_tests: int = 1) -> Optional[AssociationFit]:
    """OLS of stability (y) on accuracy (x) with a Bonferroni-corrected
    two-sided slope p-value.

    Zero x-variance leaves the slope undefined: the fit is missing (None).
    Fewer than 3 points fit a line but carry no p-value.
    """
    if m_tests < 1:
        raise ValueError("m_tests must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    n = x.size
    if n < 2:
        raise ValueError("association fit needs at least 2 points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        log.warning("zero accuracy variance; association fit is undefined")
        return None
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    if n < 3:
        return AssociationFit(slope=slope, intercept=intercept,
                              p_value=None, p_corrected=None, n=n)
    resid = y - (intercept + slope * x)
    df = n - 2
    s2 = float(np.sum(resid * resid)) / df
    se = math.sqrt(s2 / sxx)
    if se == 0.0:
        p = 0.0 if slope != 0.0 else 1.0  # exact fit: degenerate t statistic
    else:
        p = t_sf_two_sided(slope / se, df)
    return AssociationFit(
        slope=slope,
        intercept=intercept,
        p_value=p,
        p_corrected=min(1.0, p * m_tests),
        n=n,
    )


# -- tables -------------------------------------------------------------------

@dataclass
class StabilityTable:
    """Dataset x method grid of CellScores with CSV/JSON serialization."""

    kind: str  # e.g. "within", "between", "accuracy", "prediction"
    metric: str
    datasets: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)  # (dataset, method) -> CellScore

    def set(self, dataset: str, method: str, score: CellScore):
        if dataset not in self.datasets:
            self.datasets.append(dataset)
        if method not in self.methods:
            self.methods.append(method)
        self.cells[(dataset, method)] = score

    def get(self, dataset: str, method: str) -> Optional[CellScore]:
        return self.cells.get((dataset, method))

    def value(self, dataset: str, method: str) -> Optional[float]:
        cell = self.get(dataset, method)
        return None if cell is None else cell.mean

    def to_rows(self) -> list:
        rows = []
        for d in self.datasets:
            for m in self.methods:
                cell = self.get(d, m)
                if cell is None:
                    continue
                rows.append({
                    "dataset": d,
                    "method": m,
                    "value": "" if cell.mean is None else fmt_float(cell.mean),
                    "metric": cell.metric,
                    "n_repeats": cell.n_repeats,
                    "n_pairs": cell.n_pairs,
                    "n_skipped": cell.n_skipped,
                })
        return rows

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "metric": self.metric,
            "datasets": list(self.datasets),
            "methods": list(self.methods),
            "cells": [
                {
                    "dataset": d,
                    "method": m,
                    "mean": cell.mean,
                    "metric": cell.metric,
                    "n_repeats": cell.n_repeats,
                    "n_pairs": cell.n_pairs,
                    "n_skipped": cell.n_skipped,
                }
                for (d, m), cell in sorted(self.cells.items(), key=lambda kv: kv[0])
            ],
        }
