"""Baseline interpretable learners: linear models, clusterers, embedders."""
from .linear import (
    LassoConvergenceError,
    LinearModel,
    fit_lasso,
    fit_ridge,
    lasso_model,
    permutation_importance,
    ridge_model,
)
from .cluster import hierarchical, kmeans, minibatch_kmeans, spectral_cluster
from .embed import (
    isomap,
    metric_mds,
    pca,
    random_projection,
    spectral_embedding,
)

__all__ = [
    "LassoConvergenceError",
    "LinearModel",
    "fit_lasso",
    "fit_ridge",
    "lasso_model",
    "ridge_model",
    "permutation_importance",
    "kmeans",
    "minibatch_kmeans",
    "hierarchical",
    "spectral_cluster",
    "pca",
    "random_projection",
    "metric_mds",
    "isomap",
    "spectral_embedding",
]
