"""Pairwise distances with the edge-case conventions the metrics rely on."""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import distance as _sd

log = logging.getLogger(__name__)

METRICS = ("euclidean", "manhattan", "chebyshev", "cosine", "canberra")

_SCIPY_NAMES = {
    "euclidean": "euclidean",
    "manhattan": "cityblock",
    "chebyshev": "chebyshev",
    "canberra": "canberra",  # scipy already treats 0/0 terms as 0
}


def pairwise(X: np.ndarray, Y: np.ndarray = None, *, metric: str = "euclidean") -> np.ndarray:
    """Dense distance matrix between rows of X and Y (Y defaults to X).

    Cosine is defined against zero vectors: distance 1 when exactly one of
    the pair is zero (logged once per call), 0 when both are.
    """
    X = np.asarray(X, dtype=float)
    symmetric = Y is None
    Y = X if symmetric else np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError("inputs must be 2-d with matching feature counts")
    if metric in _SCIPY_NAMES:
        D = _sd.cdist(X, Y, metric=_SCIPY_NAMES[metric])
    elif metric == "cosine":
        D = _cosine(X, Y)
    else:
        raise ValueError(f"unknown distance metric {metric!r}")
    if symmetric:
        np.fill_diagonal(D, 0.0)
    return D


def _cosine(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    zx = nx == 0.0
    zy = ny == 0.0
    sim = (X @ Y.T) / np.outer(np.where(zx, 1.0, nx), np.where(zy, 1.0, ny))
    D = 1.0 - sim
    if zx.any() or zy.any():
        log.info("cosine distance saw zero vectors; defining their distance as 1")
        D[zx, :] = 1.0
        D[:, zy] = 1.0
        if zx.any() and zy.any():
            D[np.ix_(zx, zy)] = 0.0  # identical (zero) points stay at distance 0
    return np.clip(D, 0.0, 2.0)
