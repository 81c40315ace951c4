"""Penalized linear models and permutation importance.

Ridge solves min ||y - Xb||^2 + lam ||b||^2 (SVD path, exact); lasso solves
min (1/2N) ||y - Xb||^2 + lam ||b||_1 by coordinate descent on the Gram
matrix with duality-gap certification.  Both select lam by k-fold CV over a
log grid; classification runs one-vs-rest on the label indicators.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import FeatureRanking, TabularDataset

N_LAMBDAS = 50
GRID_SPAN = 1e-4  # grid spans [span * lam_max, lam_max]


class LassoConvergenceError(RuntimeError):
    def __init__(self, gap: float, sweeps: int):
        self.gap = gap
        self.sweeps = sweeps
        super().__init__(
            f"coordinate descent did not converge after {sweeps} sweeps "
            f"(duality gap {gap:.3e})"
        )


@dataclass(frozen=True)
class LinearModel:
    """Fitted linear predictor; (C x P) coefficients for one-vs-rest."""

    coef: np.ndarray
    intercept: np.ndarray
    penalty: float
    penalty_kind: str  # "l2" | "l1"
    task: str  # "regression" | "classification"
    n_classes: Optional[int] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.task == "regression":
            return X @ self.coef + self.intercept
        scores = X @ self.coef.T + self.intercept
        return np.argmax(scores, axis=1)

    def importance(self) -> FeatureRanking:
        if self.task == "regression":
            return FeatureRanking.from_scores(np.abs(self.coef))
        return FeatureRanking.from_scores(np.abs(self.coef).mean(axis=0))


def _design(train: TabularDataset):
    """(X, Y) with classification targets expanded to one-hot columns."""
    if train.target is None:
        raise ValueError("linear learners need a supervised dataset")
    X = train.features
    if train.task_kind == "regression":
        Y = train.target.reshape(-1, 1).astype(float)
    else:
        Y = np.zeros((train.n_samples, train.n_classes))
        Y[np.arange(train.n_samples), train.target] = 1.0
    return X, Y


def _center(X, Y, fit_intercept):
    if not fit_intercept:
        return X, Y, np.zeros(X.shape[1]), np.zeros(Y.shape[1])
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    return X - xm, Y - ym, xm, ym


def _lambda_grid(lam_max: float, n_points: int = N_LAMBDAS) -> np.ndarray:
    if n_points < 1:
        raise ValueError("lambda grid must have at least one point")
    if lam_max <= 0:
        raise ValueError("lambda grid needs lam_max > 0")
    return np.logspace(np.log10(GRID_SPAN * lam_max), np.log10(lam_max), n_points)


def _fold_slices(n: int, folds: int):
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n <= folds:
        raise ValueError(f"need more than {folds} samples for {folds}-fold CV")
    return np.array_split(np.arange(n), folds)


def _pick_lambda(grid: np.ndarray, mse: np.ndarray) -> float:
    # ascending scan with <=, so exact ties resolve to the larger penalty
    best, best_mse = grid[0], np.inf
    for lam, m in zip(grid, mse):
        if m <= best_mse:
            best, best_mse = lam, m
    return float(best)


# -- ridge --------------------------------------------------------------

def _ridge_solve_path(Xc, Yc, grid):
    """Coefficients for every lambda at once via the SVD of Xc."""
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    UtY = U.T @ Yc
    # shrinkage s/(s^2+lam) applied on the singular spectrum
    B = np.empty((grid.size, Xc.shape[1], Yc.shape[1]))
    for i, lam in enumerate(grid):
        B[i] = Vt.T @ ((s / (s * s + lam))[:, None] * UtY)
    return B


def ridge_model(
    train: TabularDataset,
    *,
    folds: int = 5,
    lam: Optional[float] = None,
    fit_intercept: bool = True,
) -> LinearModel:
    X, Y = _design(train)
    Xc, Yc, xm, ym = _center(X, Y, fit_intercept)
    gmax = np.abs(Xc.T @ Yc).max()
    if gmax == 0.0:
        coef = np.zeros((Y.shape[1], X.shape[1]))
        return _finish(train, coef, xm, ym, 0.0, "l2", fit_intercept)
    if lam is None:
        grid = _lambda_grid(gmax)
        mse = np.zeros(grid.size)
        for val_idx in _fold_slices(train.n_samples, folds):
            mask = np.ones(train.n_samples, dtype=bool)
            mask[val_idx] = False
            Xt, Yt, xmf, ymf = _center(X[mask], Y[mask], fit_intercept)
            B = _ridge_solve_path(Xt, Yt, grid)
            Xv = X[val_idx] - xmf
            Yv = Y[val_idx] - ymf
            for i in range(grid.size):
                R = Yv - Xv @ B[i]
                mse[i] += np.mean(R * R)
        lam = _pick_lambda(grid, mse)
    elif lam <= 0:
        raise ValueError(f"ridge penalty must be > 0, got {lam}")
    beta = _ridge_solve_path(Xc, Yc, np.array([lam]))[0]
    return _finish(train, beta.T, xm, ym, lam, "l2", fit_intercept)


# -- lasso --------------------------------------------------------------

def _soft(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _lasso_cd(G, c, yty, n, lam, beta, max_sweeps, tol):
    """In-place coordinate descent on the Gram system; returns (beta, gap)."""
    if lam <= 0.0:
        raise ValueError("coordinate descent requires lam > 0")
    p = beta.size
    diag = np.diag(G).copy()
    target = tol * max(yty / n, 1e-12)
    gap = np.inf
    for sweep in range(max_sweeps):
        for j in range(p):
            if diag[j] == 0.0:
                beta[j] = 0.0  # constant column: the penalty keeps it at zero
                continue
            z = c[j] - G[j] @ beta + diag[j] * beta[j]
            beta[j] = _soft(z, lam) / diag[j]
        gap = _lasso_gap(G, c, yty, n, lam, beta)
        if gap <= target:
            return beta, gap
    raise LassoConvergenceError(gap, max_sweeps)


def _lasso_gap(G, c, yty, n, lam, beta):
    """Duality gap of (1/2N)||y-Xb||^2 + lam ||b||_1 from Gram quantities."""
    Gb = G @ beta
    r2 = max(0.0, yty - 2.0 * n * (beta @ c) + n * (beta @ Gb))
    dual_norm = n * np.abs(c - Gb).max() if beta.size else 0.0
    alpha = lam * n
    r_dot_y = yty - n * (beta @ c)
    if dual_norm > alpha and dual_norm > 0.0:
        const = alpha / dual_norm
        gap = 0.5 * r2 * (1.0 + const * const)
    else:
        const = 1.0
        gap = r2
    gap += alpha * np.abs(beta).sum() - const * r_dot_y
    return gap / n


def _lasso_path(Xc, yc, grid_desc, max_sweeps, tol):
    """Warm-started solutions for one response column, lambdas descending."""
    n = Xc.shape[0]
    G = (Xc.T @ Xc) / n
    c = (Xc.T @ yc) / n
    yty = float(yc @ yc)
    beta = np.zeros(Xc.shape[1])
    out = np.empty((grid_desc.size, Xc.shape[1]))
    for i, lam in enumerate(grid_desc):
        if lam == 0.0:
            # penalty-free limit: plain least squares on the centered design
            beta = np.linalg.lstsq(Xc, yc, rcond=None)[0]
        else:
            beta, _ = _lasso_cd(G, c, yty, n, float(lam), beta, max_sweeps, tol)
        out[i] = beta
    return out


def lasso_model(
    train: TabularDataset,
    *,
    folds: int = 5,
    lam: Optional[float] = None,
    fit_intercept: bool = True,
    max_sweeps: int = 5000,
    tol: float = 1e-9,
) -> LinearModel:
    X, Y = _design(train)
    n = train.n_samples
    Xc, Yc, xm, ym = _center(X, Y, fit_intercept)
    lam_max = np.abs(Xc.T @ Yc).max() / n
    if lam_max == 0.0:
        coef = np.zeros((Y.shape[1], X.shape[1]))
        return _finish(train, coef, xm, ym, 0.0, "l1", fit_intercept)
    if lam is None:
        grid_desc = _lambda_grid(lam_max)[::-1]
        mse = np.zeros(grid_desc.size)
        for val_idx in _fold_slices(n, folds):
            mask = np.ones(n, dtype=bool)
            mask[val_idx] = False
            Xt, Yt, xmf, ymf = _center(X[mask], Y[mask], fit_intercept)
            Xv = X[val_idx] - xmf
            Yv = Y[val_idx] - ymf
            for col in range(Y.shape[1]):
                B = _lasso_path(Xt, Yt[:, col], grid_desc, max_sweeps, tol)
                R = Yv[:, col][None, :] - B @ Xv.T
                mse += np.mean(R * R, axis=1)
        lam = _pick_lambda(grid_desc[::-1], mse[::-1])
        grid_to_lam = grid_desc[grid_desc >= lam]
    elif lam < 0:
        raise ValueError(f"lasso penalty must be >= 0, got {lam}")
    else:
        grid_to_lam = np.array([lam])
    coef = np.empty((Y.shape[1], X.shape[1]))
    for col in range(Y.shape[1]):
        B = _lasso_path(Xc, Yc[:, col], grid_to_lam, max_sweeps, tol)
        coef[col] = B[-1]
    return _finish(train, coef, xm, ym, float(lam), "l1", fit_intercept)


def _finish(train, coef, xm, ym, lam, kind, fit_intercept):
    """Package (C x P) coefficients into a LinearModel in dataset terms."""
    coef = np.asarray(coef, dtype=float)
    intercept = ym - coef @ xm if fit_intercept else np.zeros_like(ym)
    if train.task_kind == "regression":
        return LinearModel(
            coef=coef[0],
            intercept=float(intercept[0]),
            penalty=lam,
            penalty_kind=kind,
            task="regression",
        )
    return LinearModel(
        coef=coef,
        intercept=intercept,
        penalty=lam,
        penalty_kind=kind,
        task="classification",
        n_classes=train.n_classes,
    )


def fit_ridge(train: TabularDataset, *, folds: int = 5, lam: Optional[float] = None,
              fit_intercept: bool = True) -> FeatureRanking:
    """Ridge importance: |coefficient| at the CV-selected penalty."""
    return ridge_model(train, folds=folds, lam=lam, fit_intercept=fit_intercept).importance()


def fit_lasso(train: TabularDataset, *, folds: int = 5, lam: Optional[float] = None,
              fit_intercept: bool = True) -> FeatureRanking:
    """Lasso importance: |coefficient| at the CV-selected penalty, zeros last."""
    return lasso_model(train, folds=folds, lam=lam, fit_intercept=fit_intercept).importance()


# -- permutation importance ----------------------------------------------

def _prediction_error(model, X, y, task) -> float:
    pred = model.predict(X)
    if task == "classification":
        return float(np.mean(pred != y))
    d = pred - y
    return float(np.mean(d * d))


def permutation_importance(
    model, test: TabularDataset, *, repeats: int = 10, seed: int = 0
) -> FeatureRanking:
    """Mean error increase when each feature column is permuted.

    ``model`` is anything with a ``predict`` over feature matrices; errors
    are misclassification rate or MSE according to the dataset task.
    """
    if test.target is None:
        raise ValueError("permutation importance needs labelled test data")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    task = "regression" if test.task_kind == "regression" else "classification"
    X, y = test.features, test.target
    baseline = _prediction_error(model, X, y, task)
    rng = np.random.default_rng(seed)
    deltas = np.zeros(test.n_features)
    work = X.copy()
    for _ in range(repeats):
        for j in range(test.n_features):
            saved = work[:, j].copy()
            work[:, j] = saved[rng.permutation(test.n_samples)]
            deltas[j] += _prediction_error(model, work, y, task) - baseline
            work[:, j] = saved
    return FeatureRanking.from_scores(deltas / repeats)
