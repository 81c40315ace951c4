"""Dimension-reduction learners producing Embedding artifacts.

Sign conventions are fixed (largest-magnitude loading positive) so repeated
runs are comparable without Procrustes alignment.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, dijkstra

from ..core import Embedding, TabularDataset
from ..distances import pairwise
from .cluster import _data_matrix, _ids, _knn_affinity, _laplacian_eigs

log = logging.getLogger(__name__)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-|entry| coordinate is positive."""
    V = V.copy()
    for c in range(V.shape[1]):
        col = V[:, c]
        if col[np.argmax(np.abs(col))] < 0:
            V[:, c] = -col
    return V


def pca(data, rank: int) -> Embedding:
    """Projection onto the top-r right singular directions of centered X."""
    X = _data_matrix(data)
    n, p = X.shape
    if not 1 <= rank <= min(n, p):
        raise ValueError(f"rank must be in [1, min(N, P)] = [1, {min(n, p)}], got {rank}")
    Xc = X - X.mean(axis=0)
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    W = _fix_signs(Vt[:rank].T)  # sign fixed on the loadings
    return Embedding(sample_ids=_ids(data, n), coords=Xc @ W)


def random_projection(data, rank: int, *, seed: int = 0, projection: Optional[np.ndarray] = None) -> Embedding:
    """X G / sqrt(r) with G i.i.d. standard normal (override is a test hook)."""
    X = _data_matrix(data)
    n, p = X.shape
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if projection is None:
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal((p, rank))
    G = np.asarray(projection, dtype=float)
    if G.shape != (p, rank):
        raise ValueError(f"projection must have shape ({p}, {rank})")
    return Embedding(sample_ids=_ids(data, n), coords=X @ G / np.sqrt(rank))


def _cmds(sq_dist: np.ndarray, rank: int):
    """Classical MDS on a squared-distance matrix -> (coords, n_padded)."""
    n = sq_dist.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ sq_dist @ J
    vals, vecs = np.linalg.eigh((B + B.T) / 2.0)
    top = np.argsort(vals)[::-1][:rank]
    coords = np.zeros((n, rank))
    padded = 0
    for out_col, idx in enumerate(top):
        if vals[idx] > 0.0:
            coords[:, out_col] = vecs[:, idx] * np.sqrt(vals[idx])
        else:
            padded += 1  # nonpositive eigenvalue: coordinate stays zero
    return _fix_signs(coords), padded


def metric_mds(data, rank: int) -> Embedding:
    """Classical (Torgerson) MDS of the euclidean distance matrix.

    Fewer than ``rank`` positive eigenvalues pads the remaining coordinates
    with zeros (flagged in the log).
    """
    X = _data_matrix(data)
    n = X.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, N], got {rank}")
    D = pairwise(X)
    coords, padded = _cmds(D * D, rank)
    if padded:
        log.warning("metric MDS padded %d of %d coordinates with zeros", padded, rank)
    return Embedding(sample_ids=_ids(data, n), coords=coords)


def isomap(data, rank: int, *, n_neighbors: int = 10) -> Embedding:
    """Classical MDS on kNN-graph geodesic distances.

    The graph is symmetrized (edge if either endpoint selects the other);
    a disconnected graph is an error naming the component count.
    """
    X = _data_matrix(data)
    n = X.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, N], got {rank}")
    A = _knn_affinity(X, n_neighbors)  # raises for n_neighbors outside [1, N-1]
    ncomp, _ = connected_components(csr_matrix(A > 0), directed=False)
    if ncomp > 1:
        raise ValueError(
            f"kNN graph is disconnected ({ncomp} components); increase n_neighbors"
        )
    # inf-null dense conversion keeps zero-weight edges (duplicate points)
    W = np.where(A > 0, pairwise(X), np.inf)
    geo = dijkstra(csgraph_from_dense(W, null_value=np.inf), directed=False)
    coords, padded = _cmds(geo * geo, rank)
    if padded:
        log.warning("isomap padded %d of %d coordinates with zeros", padded, rank)
    return Embedding(sample_ids=_ids(data, n), coords=coords)


def spectral_embedding(
    data,
    rank: int,
    *,
    affinity: str = "knn",
    n_neighbors: int = 10,
    gamma: Optional[float] = None,
) -> Embedding:
    """Rows of the bottom-r nontrivial normalized-Laplacian eigenvectors."""
    from .cluster import _affinity  # shared affinity construction

    X = _data_matrix(data)
    n = X.shape[0]
    if not 1 <= rank <= n - 1:
        raise ValueError(f"rank must be in [1, N-1], got {rank}")
    A = _affinity(X, affinity, n_neighbors, gamma)
    ncomp, _ = connected_components(csr_matrix(A > 0), directed=False)
    if ncomp > 1:
        raise ValueError(
            f"affinity graph is disconnected ({ncomp} components); "
            f"spectral embedding needs a connected graph"
        )
    vals, vecs = _laplacian_eigs(A)
    V = vecs[:, 1 : rank + 1]  # drop the trivial bottom eigenvector
    # zero eigengap at the cut: the retained subspace itself is arbitrary
    if vals.size > rank + 1 and vals[rank + 1] - vals[rank] < 1e-12:
        log.warning("degenerate Laplacian spectrum at rank %d; embedding subspace is arbitrary", rank)
    return Embedding(sample_ids=_ids(data, n), coords=_fix_signs(V))
