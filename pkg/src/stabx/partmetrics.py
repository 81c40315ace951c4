"""Partition-agreement metrics between two cluster labelings.

Everything is computed from the contingency table of co-memberships, so all
metrics are invariant under relabeling on either side.  The same functions
double as clustering accuracy when one side holds true labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClusterLabeling


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # |A| x |B| co-membership counts
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int


def _labels(x) -> np.ndarray:
    if isinstance(x, ClusterLabeling):
        return np.asarray(x.labels)
    lab = np.asarray(x, dtype=int)
    if lab.ndim != 1 or lab.size == 0:
        raise ValueError("labels must be a non-empty vector")
    return lab


def _check_alignment(a, b):
    if isinstance(a, ClusterLabeling) and isinstance(b, ClusterLabeling):
        if a.sample_ids != b.sample_ids:
            raise ValueError("labelings cover different sample id sequences")


def contingency(a, b) -> ContingencyTable:
    """Co-membership counts n_ij between the clusters of two labelings."""
    _check_alignment(a, b)
    la, lb = _labels(a), _labels(b)
    if la.size != lb.size:
        raise ValueError(f"labelings differ in length ({la.size} vs {lb.size})")
    # compress to dense codes so empty clusters don't pad the table
    ua, ia = np.unique(la, return_inverse=True)
    ub, ib = np.unique(lb, return_inverse=True)
    counts = np.bincount(ia * ub.size + ib, minlength=ua.size * ub.size)
    counts = counts.reshape(ua.size, ub.size)
    return ContingencyTable(
        counts=counts,
        row_sums=counts.sum(axis=1),
        col_sums=counts.sum(axis=0),
        n=int(la.size),
    )


def _pair_counts(t: ContingencyTable):
    """(TP, pairs_A, pairs_B, total_pairs) in co-membership pair space."""
    comb2 = lambda x: x * (x - 1) / 2.0
    tp = float(comb2(t.counts.astype(float)).sum())
    pa = float(comb2(t.row_sums.astype(float)).sum())
    pb = float(comb2(t.col_sums.astype(float)).sum())
    return tp, pa, pb, comb2(float(t.n))


def ari(a, b) -> float:
    """Adjusted Rand index; 1 on agreement, ~0 for independent partitions.

    The chance-degenerate case (denominator 0: both sides all singletons or
    both one cluster) is defined as 1.
    """
    t = contingency(a, b)
    if t.n < 2:
        raise ValueError("ARI needs at least 2 samples")
    tp, pa, pb, total = _pair_counts(t)
    expected = pa * pb / total
    max_index = (pa + pb) / 2.0
    if max_index == expected:
        return 1.0
    return float((tp - expected) / (max_index - expected))


def fowlkes_mallows(a, b) -> float:
    """Geometric mean of pair precision and recall: TP / sqrt(pairs_A * pairs_B)."""
    t = contingency(a, b)
    if t.n < 2:
        raise ValueError("Fowlkes-Mallows needs at least 2 samples")
    tp, pa, pb, _ = _pair_counts(t)
    if pa == 0.0 or pb == 0.0:
        # one side is all singletons: no co-membership pairs to recover
        return 1.0 if pa == pb else 0.0
    return float(tp / math.sqrt(pa * pb))


def _entropy(freq: np.ndarray, n: int) -> float:
    p = freq[freq > 0] / n
    return float(-(p * np.log(p)).sum())


def mutual_information(a, b) -> float:
    """MI between the two labelings, in nats."""
    t = contingency(a, b)
    nz = t.counts > 0
    pij = t.counts[nz] / t.n
    pi = (t.row_sums / t.n)[np.nonzero(nz)[0]]
    pj = (t.col_sums / t.n)[np.nonzero(nz)[1]]
    return float(max(0.0, (pij * np.log(pij / (pi * pj))).sum()))


def v_measure(a, b, beta: float = 1.0) -> float:
    """Weighted harmonic mean of homogeneity and completeness.

    h = 1 - H(A|B)/H(A) (defined as 1 when H(A) = 0), c symmetric; at
    beta = 1 this equals 2 MI / (H(A) + H(B)), the arithmetic-mean NMI.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    t = contingency(a, b)
    ha = _entropy(t.row_sums, t.n)
    hb = _entropy(t.col_sums, t.n)
    mi = mutual_information(a, b)
    h = 1.0 if ha == 0.0 else mi / ha
    c = 1.0 if hb == 0.0 else mi / hb
    if h + c == 0.0:
        return 0.0
    return float((1.0 + beta) * h * c / (beta * c + h))


PARTITION_METRICS = {
    "ari": ari,
    "fm": fowlkes_mallows,
    "mi": mutual_information,
    "v": v_measure,
}
