"""stabx: stability of ML interpretations under seeded data perturbations.

The pipeline perturbs a dataset (splits / subsamples / additive noise),
re-runs interpretation methods on every repeat, scores the agreement of the
resulting artifacts (rankings, labelings, embeddings), and aggregates the
scores into within-method and between-method stability tables with
accuracy companions and association fits.
"""

__version__ = "0.1.0"

from .core import (
    ClusterLabeling,
    Embedding,
    FeatureRanking,
    ParseError,
    PredictionSet,
    TabularDataset,
    load_csv,
    save_csv,
    standardize,
)
from .perturb import (
    PerturbationPlan,
    apply_noise,
    make_noise_plan,
    make_splits,
    make_subsamples,
    realize,
    sigma_sweep,
)
from .rankmetrics import average_overlap, jaccard_at_k, kendall_topk
from .partmetrics import ari, contingency, fowlkes_mallows, mutual_information, v_measure
from .nnmetrics import NnCurve, knn_sets, nn_jaccard_at_k, nn_jaccard_auc
from .stability import (
    AssociationFit,
    CellScore,
    StabilityTable,
    accuracy_classification,
    accuracy_clustering,
    accuracy_regression,
    between_method,
    between_prediction_classification,
    fit_association,
    normalized_mse_scores,
    pairwise_mse,
    prediction_stability_classification,
    prediction_stability_regression,
    within_method,
)
from .runner import RunnerManifest, RunnerResult, invoke, parse_interpretation

__all__ = [
    "TabularDataset",
    "FeatureRanking",
    "ClusterLabeling",
    "Embedding",
    "PredictionSet",
    "ParseError",
    "load_csv",
    "save_csv",
    "standardize",
    "PerturbationPlan",
    "make_splits",
    "make_subsamples",
    "make_noise_plan",
    "apply_noise",
    "realize",
    "sigma_sweep",
    "jaccard_at_k",
    "average_overlap",
    "kendall_topk",
    "contingency",
    "ari",
    "fowlkes_mallows",
    "mutual_information",
    "v_measure",
    "NnCurve",
    "knn_sets",
    "nn_jaccard_at_k",
    "nn_jaccard_auc",
    "CellScore",
    "StabilityTable",
    "AssociationFit",
    "within_method",
    "between_method",
    "prediction_stability_classification",
    "prediction_stability_regression",
    "between_prediction_classification",
    "pairwise_mse",
    "normalized_mse_scores",
    "accuracy_classification",
    "accuracy_regression",
    "accuracy_clustering",
    "fit_association",
    "RunnerManifest",
    "RunnerResult",
    "invoke",
    "parse_interpretation",
]
