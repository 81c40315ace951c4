"""Top-K similarity metrics between two feature rankings.

All three metrics compare the heads of two rankings over the same feature
universe: Jaccard of the top-k sets, average overlap (AO) across depths,
and a top-K Kendall tau with a penalty parameter for unknowable pairs.
"""
from __future__ import annotations

import logging
from itertools import combinations

import numpy as np

from .core import FeatureRanking

log = logging.getLogger(__name__)


def _order(ranking) -> np.ndarray:
    if isinstance(ranking, FeatureRanking):
        return np.asarray(ranking.order)
    o = np.asarray(ranking, dtype=int)
    if o.ndim != 1 or o.size == 0:
        raise ValueError("ranking must be a non-empty 1-d order")
    if sorted(o.tolist()) != list(range(o.size)):
        raise ValueError("ranking order must be a permutation of 0..P-1")
    return o


def _align(a, b, k: int):
    oa, ob = _order(a), _order(b)
    if oa.size != ob.size:
        raise ValueError(
            f"rankings over different feature universes ({oa.size} vs {ob.size})"
        )
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > oa.size:
        log.warning("k=%d exceeds %d features; clamping", k, oa.size)
        k = oa.size
    return oa, ob, k


def jaccard_at_k(a, b, k: int) -> float:
    """|A_k ∩ B_k| / |A_k ∪ B_k| over the two top-k sets."""
    oa, ob, k = _align(a, b, k)
    A, B = set(oa[:k].tolist()), set(ob[:k].tolist())
    return len(A & B) / len(A | B)


def average_overlap(a, b, k: int) -> float:
    """Mean over depths d <= k of the top-d set overlap fraction."""
    oa, ob, k = _align(a, b, k)
    profile = overlap_profile(oa, ob, k)
    depths = np.arange(1, k + 1, dtype=float)
    return float(np.mean(profile / depths))


def overlap_profile(oa: np.ndarray, ob: np.ndarray, kmax: int) -> np.ndarray:
    """|A_d ∩ B_d| for every depth d = 1..kmax, in one pass.

    Feeds the K sweeps: Jaccard@k = profile[k-1] / (2k - profile[k-1]) and
    AO@k is the running mean of profile[d-1]/d.
    """
    seen_a: set = set()
    seen_b: set = set()
    profile = np.empty(kmax, dtype=np.intp)
    overlap = 0
    for d in range(kmax):
        x, y = int(oa[d]), int(ob[d])
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_b) + (y in seen_a)
        seen_a.add(x)
        seen_b.add(y)
        profile[d] = overlap
    return profile


def kendall_topk(a, b, k: int, p: float = 0.0) -> float:
    """Top-K Kendall tau with penalty p for unknowable pairs.

    The raw distance K^(p) sums over unordered pairs of the union of the two
    top-k lists, following the four co-occurrence cases: pairs ranked by both
    lists count 1 on order disagreement; pairs where one list ranks both and
    the other ranks one count 0/1 against the implied order; pairs split one
    per list count 1; pairs known to only one list count p.  Normalized to
    tau = 1 - 2 K^(p) / C(|union|, 2); fewer than two union elements means no
    pairs and tau = 1.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"penalty p must be in [0, 1], got {p}")
    oa, ob, k = _align(a, b, k)
    pos_a = {int(f): r for r, f in enumerate(oa[:k])}
    pos_b = {int(f): r for r, f in enumerate(ob[:k])}
    union = sorted(set(pos_a) | set(pos_b))
    u = len(union)
    if u < 2:
        return 1.0
    dist = 0.0
    for x, y in combinations(union, 2):
        xa, ya = pos_a.get(x), pos_a.get(y)
        xb, yb = pos_b.get(x), pos_b.get(y)
        in_a = (xa is not None) + (ya is not None)
        in_b = (xb is not None) + (yb is not None)
        if in_a == 2 and in_b == 2:
            dist += (xa < ya) != (xb < yb)
        elif in_a == 2 and in_b == 1:
            # b implies its present item outranks the absent one
            dist += (xa < ya) != (xb is not None)
        elif in_a == 1 and in_b == 2:
            dist += (xb < yb) != (xa is not None)
        elif in_a == 2 or in_b == 2:
            dist += p  # both in one list, neither in the other: unknowable
        else:  # opposite singletons: order is definitely reversed
            dist += 1.0
    tau = 1.0 - 2.0 * dist / (u * (u - 1) / 2)
    return float(tau)
