"""One scikit-learn method per protocol task.

Each is pinned to the manifest seed so the same manifest always produces
identical output bytes — the harness checks this, so nothing here may
introduce unseeded randomness.
"""
from __future__ import annotations

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, GradientBoostingRegressor
from sklearn.manifold import TSNE
from sklearn.mixture import GaussianMixture


def boosted_importance(X: np.ndarray, y_raw: list, target_task, seed: int):
    """Gradient-boosted trees; returns (fitted model, impurity importances)."""
    if target_task == "classification":
        model = GradientBoostingClassifier(random_state=seed)
        y = y_raw
    else:
        model = GradientBoostingRegressor(random_state=seed)
        y = np.asarray(y_raw, dtype=float)
    model.fit(X, y)
    return model, model.feature_importances_


def mixture_labels(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    gm = GaussianMixture(n_components=k, random_state=seed)
    return gm.fit_predict(X).astype(int)


def tsne_coords(X: np.ndarray, rank: int, seed: int) -> np.ndarray:
    n, p = X.shape
    # exact gradients: no Barnes-Hut rank<=3 restriction, and deterministic
    perplexity = min(30.0, max(1.0, (n - 1) / 3.0))
    init = "pca" if rank <= min(n, p) else "random"
    tsne = TSNE(n_components=rank, method="exact", init=init,
                perplexity=perplexity, random_state=seed)
    return np.asarray(tsne.fit_transform(X), dtype=float)
