"""NN-Jaccard-AUC: embedding stability via nearest-neighbor set agreement.

For each sample the k nearest neighbors (euclidean, self excluded) are
compared across two embeddings with the Jaccard score; the mean is swept
over a grid of k and summarized by the area under the curve.  Distance ties
break by ascending sample id so every result is platform-deterministic.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import Embedding
from .distances import pairwise


@dataclass(frozen=True)
class NnCurve:
    k_grid: tuple
    scores: tuple
    auc: float

    def __post_init__(self):
        ks = np.asarray(self.k_grid)
        if ks.ndim != 1 or ks.size < 2 or np.any(np.diff(ks) <= 0):
            raise ValueError("k grid must be strictly increasing with >= 2 points")
        if len(self.scores) != ks.size:
            raise ValueError("scores must align with the k grid")
        if any(not 0.0 <= s <= 1.0 for s in self.scores):
            raise ValueError("curve scores must lie in [0, 1]")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError("auc must lie in [0, 1]")


def _id_rank(sample_ids) -> np.ndarray:
    """position -> rank of the sample id in ascending id order"""
    order = sorted(range(len(sample_ids)), key=lambda i: sample_ids[i])
    rank = np.empty(len(sample_ids), dtype=np.intp)
    for r, i in enumerate(order):
        rank[i] = r
    return rank


def knn_sets(emb: Embedding, k: int, *, _rank=None) -> np.ndarray:
    """(N x k) neighbor position indices per sample, ties by ascending id."""
    n = emb.n_samples
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, N-1] = [1, {n - 1}], got {k}")
    rank = _id_rank(emb.sample_ids) if _rank is None else _rank
    D = pairwise(emb.coords)
    np.fill_diagonal(D, np.inf)  # self-exclusion
    order = np.lexsort((np.broadcast_to(rank, (n, n)), D), axis=1)
    return order[:, :k]


def _subset(n: int, cap: int, seed: int, sample_ids) -> np.ndarray:
    """Evaluation subset derived from (seed, ids) only, so it is symmetric."""
    if n <= cap:
        return np.arange(n)
    digest = hashlib.sha256(repr(tuple(sample_ids)).encode()).digest()
    entropy = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), entropy]))
    return np.sort(rng.permutation(n)[:cap])


def _check_pair(ea: Embedding, eb: Embedding):
    if ea.sample_ids != eb.sample_ids:
        raise ValueError("embeddings cover different sample id sequences")


def nn_jaccard_at_k(
    ea: Embedding, eb: Embedding, k: int, *, sample_cap: int = 500, seed: int = 0
) -> float:
    """Mean per-sample Jaccard of the two k-neighborhoods."""
    _check_pair(ea, eb)
    rank = _id_rank(ea.sample_ids)
    rows = _subset(ea.n_samples, sample_cap, seed, ea.sample_ids)
    na = knn_sets(ea, k, _rank=rank)[rows]
    nb = knn_sets(eb, k, _rank=rank)[rows]
    return float(_mean_jaccard(na, nb, ea.n_samples))


def _mean_jaccard(na: np.ndarray, nb: np.ndarray, n: int) -> float:
    k = na.shape[1]
    # bincount-based set intersection per row; k << N so this stays cheap
    inter = np.empty(na.shape[0], dtype=float)
    for i in range(na.shape[0]):
        inter[i] = np.intersect1d(na[i], nb[i], assume_unique=True).size
    return float(np.mean(inter / (2 * k - inter)))


def nn_jaccard_auc(
    ea: Embedding,
    eb: Embedding,
    *,
    grid_size: int = 50,
    sample_cap: int = 500,
    seed: int = 0,
) -> NnCurve:
    """Jaccard curve over a k grid plus the analytic K=N endpoint (score 1).

    The grid is ``grid_size`` evenly spaced integers from 1 to N-1; the AUC
    is the trapezoidal area over k mapped to x = (k-1)/(N-1), so identical
    embeddings integrate to exactly 1.
    """
    _check_pair(ea, eb)
    n = ea.n_samples
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    rank = _id_rank(ea.sample_ids)
    rows = _subset(n, sample_cap, seed, ea.sample_ids)
    ks = np.unique(np.linspace(1, n - 1, min(grid_size, n - 1)).round().astype(int))
    # one kNN pass at the largest k serves every smaller k by prefix
    kmax = int(ks[-1])
    na = knn_sets(ea, kmax, _rank=rank)[rows]
    nb = knn_sets(eb, kmax, _rank=rank)[rows]
    scores = [_mean_jaccard(na[:, :k], nb[:, :k], n) for k in ks]
    k_grid = [int(k) for k in ks] + [n]
    scores.append(1.0)  # K = N: both neighborhoods are "all others"
    x = (np.asarray(k_grid, dtype=float) - 1.0) / (n - 1.0)
    auc = float(np.trapezoid(np.asarray(scores), x))
    return NnCurve(k_grid=tuple(k_grid), scores=tuple(scores), auc=min(1.0, auc))
