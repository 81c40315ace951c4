"""Clustering learners: k-means family, agglomerative, and spectral.

All of them are deterministic functions of (data, hyperparameters, seed);
ties break toward the lowest index everywhere so repeated invocations and
out-of-process reruns produce identical labelings.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..core import ClusterLabeling, TabularDataset
from ..distances import METRICS, pairwise
from ..perturb import sample_without_replacement

LINKAGES = ("single", "complete", "average", "ward")


def _data_matrix(data) -> np.ndarray:
    if isinstance(data, TabularDataset):
        return data.features
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be 2-d")
    return X


def _ids(data, n):
    if isinstance(data, TabularDataset):
        return data.sample_ids
    return tuple(range(n))


def _check_k(k: int, n: int):
    if not 1 <= k <= n:
        raise ValueError(f"K must be in [1, N] = [1, {n}], got {k}")


# -- k-means family -------------------------------------------------------

def _init_centroids(X, k, init, rng):
    n = X.shape[0]
    if init == "random":
        return X[sample_without_replacement(rng, n, k)].copy()
    if init == "kmeanspp":
        centroids = np.empty((k, X.shape[1]))
        centroids[0] = X[rng.integers(n)]
        d2 = ((X - centroids[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = d2.sum()
            if total == 0.0:
                # all remaining mass at distance zero: fall back to uniform
                idx = int(rng.integers(n))
            else:
                idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total))
                idx = min(idx, n - 1)
            centroids[c] = X[idx]
            d2 = np.minimum(d2, ((X - centroids[c]) ** 2).sum(axis=1))
        return centroids
    raise ValueError(f"init must be 'random' or 'kmeanspp', got {init!r}")


def _assign(X, centroids):
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1), d2


def _repair_empty(X, centroids, labels, d2):
    """Re-seed each empty centroid at the point farthest from its own.

    Donor clusters must keep at least one member so a repair never creates
    a new empty cluster.
    """
    k = centroids.shape[0]
    for c in range(k):
        if np.any(labels == c):
            continue
        sizes = np.bincount(labels, minlength=k)
        dist_own = d2[np.arange(X.shape[0]), labels].copy()
        dist_own[sizes[labels] < 2] = -np.inf
        far = int(np.argmax(dist_own))
        if dist_own[far] == -np.inf:
            continue  # nothing movable; only possible with duplicate points
        centroids[c] = X[far]
        labels[far] = c
        d2[:, c] = ((X - centroids[c]) ** 2).sum(axis=1)
    return labels


def kmeans(
    data,
    k: int,
    *,
    init: str = "kmeanspp",
    max_iter: int = 300,
    seed: int = 0,
    initial_centroids: Optional[np.ndarray] = None,
) -> ClusterLabeling:
    """Lloyd iterations to an assignment fixpoint (or max_iter).

    Empty clusters re-seed at the point farthest from its assigned centroid.
    ``initial_centroids`` overrides the seeded init (test hook).
    """
    X = _data_matrix(data)
    n = X.shape[0]
    _check_k(k, n)
    rng = np.random.default_rng(seed)
    if initial_centroids is not None:
        centroids = np.array(initial_centroids, dtype=float)
    else:
        centroids = _init_centroids(X, k, init, rng)
    labels, d2 = _assign(X, centroids)
    labels = _repair_empty(X, centroids, labels, d2)
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = X[members].mean(axis=0)
        new_labels, d2 = _assign(X, centroids)
        new_labels = _repair_empty(X, centroids, new_labels, d2)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterLabeling(sample_ids=_ids(data, n), labels=labels, k=k)


def minibatch_kmeans(
    data,
    k: int,
    *,
    batch_size: int = 100,
    max_iter: int = 100,
    seed: int = 0,
    initial_centroids: Optional[np.ndarray] = None,
) -> ClusterLabeling:
    """Mini-batch k-means; a batch covering all of N reduces to Lloyd.

    Within an iteration each center follows the streaming means of its batch
    members (per-center rates 1, 1/2, 1/3, ...), i.e. the plain batch mean;
    counts reset between iterations.
    """
    X = _data_matrix(data)
    n = X.shape[0]
    _check_k(k, n)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    b = min(batch_size, n)
    rng = np.random.default_rng(seed)
    if initial_centroids is not None:
        centroids = np.array(initial_centroids, dtype=float)
    else:
        centroids = _init_centroids(X, k, "kmeanspp", rng)
    for _ in range(max_iter):
        batch = sample_without_replacement(rng, n, b) if b < n else np.arange(n)
        Xb = X[batch]
        lab, d2 = _assign(Xb, centroids)
        lab = _repair_empty(Xb, centroids, lab, d2)
        for c in range(k):
            members = Xb[lab == c]
            if members.shape[0]:
                centroids[c] = members.mean(axis=0)
    labels, _ = _assign(X, centroids)
    return ClusterLabeling(sample_ids=_ids(data, n), labels=labels, k=k)


# -- hierarchical ----------------------------------------------------------

_LW = {
    # (linkage) -> coefficients for d(i∪j, k): ai*d_ik + aj*d_jk + b*d_ij + g*|d_ik−d_jk|
    "single": lambda ni, nj, nk: (0.5, 0.5, 0.0, -0.5),
    "complete": lambda ni, nj, nk: (0.5, 0.5, 0.0, 0.5),
    "average": lambda ni, nj, nk: (ni / (ni + nj), nj / (ni + nj), 0.0, 0.0),
    "ward": lambda ni, nj, nk: (
        (ni + nk) / (ni + nj + nk),
        (nj + nk) / (ni + nj + nk),
        -nk / (ni + nj + nk),
        0.0,
    ),
}


def hierarchical(data, k: int, *, linkage: str = "average", distance: str = "euclidean") -> ClusterLabeling:
    """Agglomerative clustering via Lance-Williams updates, cut at K.

    Ward linkage requires euclidean distance and merges on squared
    distances; only merge order matters for the cut.  Argmin ties break at
    the lexicographically first active pair.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}, got {linkage!r}")
    if distance not in METRICS:
        raise ValueError(f"distance must be one of {METRICS}, got {distance!r}")
    if linkage == "ward" and distance != "euclidean":
        raise ValueError("ward linkage requires euclidean distance")
    X = _data_matrix(data)
    n = X.shape[0]
    _check_k(k, n)
    D = pairwise(X, metric=distance)
    if linkage == "ward":
        D = D * D
    # upper triangle holds the active pairwise distances; inf = inactive
    work = np.where(np.triu(np.ones((n, n), dtype=bool), 1), D, np.inf)
    sizes = np.ones(n, dtype=np.intp)
    active = np.ones(n, dtype=bool)
    coeff = _LW[linkage]
    merges = []
    for _ in range(n - 1):
        flat = int(np.argmin(work))  # row-major: first (i, then j) on ties
        i, j = divmod(flat, n)
        dij = work[i, j]
        merges.append((i, j))
        # fold cluster j into slot i
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        if others.size:
            dik = np.where(others < i, work[others, i], work[i, others])
            djk = np.where(others < j, work[others, j], work[j, others])
            ai, aj, bcoef, g = coeff(sizes[i], sizes[j], sizes[others])
            merged = ai * dik + aj * djk + bcoef * dij + g * np.abs(dik - djk)
            lo = np.minimum(others, i)
            hi = np.maximum(others, i)
            work[lo, hi] = merged
        sizes[i] += sizes[j]
        active[j] = False
        work[j, :] = np.inf
        work[:, j] = np.inf
    # replay the first n-k merges through a union-find to label the cut
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in merges[: n - k]:
        parent[find(j)] = find(i)
    roots = np.array([find(x) for x in range(n)])
    # label clusters by their smallest member index
    order = {}
    for r in roots:
        if r not in order:
            order[r] = len(order)
    labels = np.array([order[r] for r in roots])
    return ClusterLabeling(sample_ids=_ids(data, n), labels=labels, k=k)


# -- spectral ----------------------------------------------------------------

def _knn_affinity(X, n_neighbors):
    n = X.shape[0]
    if not 1 <= n_neighbors < n:
        raise ValueError(f"n_neighbors must be in [1, N-1], got {n_neighbors}")
    D = pairwise(X)
    np.fill_diagonal(D, np.inf)
    idx = np.argsort(D, axis=1, kind="stable")[:, :n_neighbors]
    A = np.zeros((n, n))
    rows = np.repeat(np.arange(n), n_neighbors)
    A[rows, idx.ravel()] = 1.0
    return np.maximum(A, A.T)  # edge if either endpoint selects the other


def _rbf_affinity(X, gamma):
    D = pairwise(X)
    A = np.exp(-gamma * D * D)
    np.fill_diagonal(A, 0.0)
    return A


def _affinity(X, affinity, n_neighbors, gamma):
    if affinity == "knn":
        return _knn_affinity(X, n_neighbors)
    if affinity == "rbf":
        return _rbf_affinity(X, 1.0 if gamma is None else gamma)
    raise ValueError(f"affinity must be 'knn' or 'rbf', got {affinity!r}")


def _laplacian_eigs(A):
    """Eigendecomposition of the symmetric normalized Laplacian of A."""
    deg = A.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    L = -A * np.outer(inv_sqrt, inv_sqrt)
    np.fill_diagonal(L, 1.0)
    L[deg == 0, deg == 0] = 0.0  # isolated points contribute a zero row
    vals, vecs = np.linalg.eigh((L + L.T) / 2.0)
    return vals, vecs


def _n_components(A):
    ncomp, _ = connected_components(csr_matrix(A > 0), directed=False)
    return int(ncomp)


def spectral_cluster(
    data,
    k: int,
    *,
    affinity: str = "knn",
    n_neighbors: int = 10,
    gamma: Optional[float] = None,
    seed: int = 0,
    max_iter: int = 300,
) -> ClusterLabeling:
    """Normalized-Laplacian spectral clustering: bottom-K eigenvectors,
    row-normalized, then seeded k-means++."""
    X = _data_matrix(data)
    n = X.shape[0]
    _check_k(k, n)
    A = _affinity(X, affinity, n_neighbors, gamma)
    if affinity == "knn":
        ncomp = _n_components(A)
        if ncomp > k:
            raise ValueError(
                f"kNN affinity graph has {ncomp} connected components for K={k}; "
                f"increase n_neighbors or use rbf affinity"
            )
    _, vecs = _laplacian_eigs(A)
    V = vecs[:, :k]
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    V = V / np.where(norms == 0.0, 1.0, norms)
    result = kmeans(V, k, init="kmeanspp", seed=seed, max_iter=max_iter)
    return ClusterLabeling(sample_ids=_ids(data, n), labels=result.labels, k=k)
