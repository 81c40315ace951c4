"""Shared data model: tabular datasets and interpretation artifacts.

Everything downstream (perturbations, learners, metrics, the pipeline)
passes these containers around.  They validate on construction and are
immutable afterwards, so an artifact loaded from disk and an artifact
produced in memory behave identically.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

SampleId = Union[int, str]

TASK_KINDS = ("regression", "classification", "unsupervised")

_MISSING_TOKENS = {"", "na", "nan", "null"}


class ParseError(ValueError):
    """Raised when a delimited input file violates the expected schema."""


def _as_float_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"feature matrix must be 2-d, got shape {X.shape}")
    return X


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TabularDataset:
    """An immutable (samples x features) table with optional target.

    ``task_kind`` is one of ``regression``, ``classification`` or
    ``unsupervised``.  Classification (and unsupervised truth) targets are
    stored as integer codes into ``class_names``, in first-appearance order.
    """

    sample_ids: tuple
    feature_names: tuple
    features: np.ndarray
    task_kind: str = "unsupervised"
    target: Optional[np.ndarray] = None
    class_names: Optional[tuple] = None
    standardized: bool = False
    constant_features: tuple = ()

    def __post_init__(self):
        X = _as_float_matrix(self.features)
        n, p = X.shape
        if n < 2:
            raise ValueError(f"dataset needs at least 2 samples, got {n}")
        if p < 1:
            raise ValueError("dataset needs at least 1 feature")
        if not np.all(np.isfinite(X)):
            bad = int(np.sum(~np.isfinite(X).all(axis=1)))
            raise ValueError(f"feature matrix has {bad} rows with non-finite values")
        if len(self.sample_ids) != n:
            raise ValueError("sample_ids length does not match feature rows")
        if len(set(self.sample_ids)) != n:
            raise ValueError("sample ids must be unique")
        if len(self.feature_names) != p:
            raise ValueError("feature_names length does not match feature columns")
        if len(set(self.feature_names)) != p:
            raise ValueError("feature names must be unique")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))
        object.__setattr__(self, "features", _freeze(X))
        if self.target is not None:
            y = np.asarray(self.target)
            if y.shape != (n,):
                raise ValueError(f"target must have shape ({n},), got {y.shape}")
            if self.task_kind == "regression":
                y = y.astype(float)
                if not np.all(np.isfinite(y)):
                    raise ValueError("regression target has non-finite values")
            else:
                # classification target, or true labels for an unsupervised task
                y = y.astype(int)
                if self.class_names is None:
                    raise ValueError("labelled target requires class_names")
                c = len(self.class_names)
                if y.min() < 0 or y.max() >= c:
                    raise ValueError("label codes out of range for class_names")
            object.__setattr__(self, "target", _freeze(y))
        elif self.task_kind != "unsupervised":
            raise ValueError(f"task_kind {self.task_kind!r} requires a target")
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.class_names is None:
            raise ValueError("dataset has no class labels")
        return len(self.class_names)

    def take(self, indices: Sequence[int]) -> "TabularDataset":
        """Row subset (e.g. a train split or subsample), preserving ids."""
        idx = np.asarray(indices, dtype=int)
        return TabularDataset(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            feature_names=self.feature_names,
            features=self.features[idx],
            task_kind=self.task_kind,
            target=None if self.target is None else self.target[idx],
            class_names=self.class_names,
            standardized=self.standardized,
            constant_features=self.constant_features,
        )

    def with_features(self, X: np.ndarray, *, standardized=False, constant_features=()) -> "TabularDataset":
        return TabularDataset(
            sample_ids=self.sample_ids,
            feature_names=self.feature_names,
            features=X,
            task_kind=self.task_kind,
            target=self.target,
            class_names=self.class_names,
            standardized=standardized,
            constant_features=tuple(constant_features),
        )


def standardize(dataset: TabularDataset) -> TabularDataset:
    """Center each feature and scale to unit sample variance (ddof=1).

    Constant features cannot be scaled; they are centered to zero and their
    indices recorded on the returned dataset.
    """
    X = dataset.features
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    const = np.flatnonzero(sd == 0.0)
    scale = np.where(sd == 0.0, 1.0, sd)
    Z = (X - mu) / scale
    return dataset.with_features(Z, standardized=True, constant_features=const.tolist())


def _parse_cell(text: str, path, line_no: int, column: str) -> float:
    token = text.strip()
    if token.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(
            f"{path}:{line_no}: column {column!r} has non-numeric value {text!r}"
        ) from None
    return value


def load_csv(
    path,
    *,
    target: Optional[str] = None,
    task: str = "unsupervised",
    id_column: Optional[str] = None,
) -> TabularDataset:
    """Load a delimited table into a :class:`TabularDataset`.

    All columns except ``target`` and ``id_column`` are features and must be
    numeric.  Rows with missing or non-finite feature/target cells are
    rejected: the load fails with the offending row count rather than
    imputing.  Classification targets may be arbitrary strings; they are
    interned to integer codes in first-appearance order.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header")
        if target is not None and target not in header:
            raise ParseError(f"{path}: target column {target!r} not in header")
        if id_column is not None and id_column not in header:
            raise ParseError(f"{path}: id column {id_column!r} not in header")
        special = {c for c in (target, id_column) if c is not None}
        feat_cols = [i for i, name in enumerate(header) if name not in special]
        if not feat_cols:
            raise ParseError(f"{path}: no feature columns")
        t_idx = header.index(target) if target is not None else None
        i_idx = header.index(id_column) if id_column is not None else None

        ids: list = []
        rows: list = []
        raw_targets: list = []
        bad_rows = 0
        first_bad = None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue  # blank line
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            values = [_parse_cell(row[j], path, line_no, header[j]) for j in feat_cols]
            missing = any(not math.isfinite(v) for v in values)
            t_raw = None
            if t_idx is not None:
                if task == "regression":
                    t_val = _parse_cell(row[t_idx], path, line_no, header[t_idx])
                    missing = missing or not math.isfinite(t_val)
                    t_raw = t_val
                else:
                    t_raw = row[t_idx].strip()
                    missing = missing or t_raw.lower() in _MISSING_TOKENS
            if missing:
                bad_rows += 1
                first_bad = first_bad or line_no
                continue
            ids.append(row[i_idx].strip() if i_idx is not None else len(rows))
            rows.append(values)
            if t_idx is not None:
                raw_targets.append(t_raw)

        if bad_rows:
            raise ParseError(
                f"{path}: {bad_rows} rows with missing or non-finite values "
                f"(first at line {first_bad}); rows are rejected, not imputed"
            )
        if not rows:
            raise ParseError(f"{path}: no data rows")

    if i_idx is not None:
        # keep integer ids as ints when the whole column parses
        try:
            ids = [int(s) for s in ids]
        except ValueError:
            pass
        if len(set(ids)) != len(ids):
            raise ParseError(f"{path}: duplicate sample ids in column {id_column!r}")

    y = None
    class_names = None
    if target is not None:
        if task == "regression":
            y = np.array(raw_targets, dtype=float)
        else:
            seen: dict = {}
            codes = []
            for label in raw_targets:
                if label not in seen:
                    seen[label] = len(seen)
                codes.append(seen[label])
            y = np.array(codes, dtype=int)
            class_names = tuple(seen)

    return TabularDataset(
        sample_ids=tuple(ids),
        feature_names=tuple(header[j] for j in feat_cols),
        features=np.array(rows, dtype=float),
        task_kind=task,
        target=y,
        class_names=class_names,
    )


def fmt_float(x) -> str:
    """Full-precision, round-trippable float text (repr of a Python float)."""
    return repr(float(x))


def save_csv(dataset: TabularDataset, path, *, include_target: bool = True) -> None:
    """Write a dataset back to CSV with round-trippable floats."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["sample_id", *dataset.feature_names]
        with_target = include_target and dataset.target is not None
        if with_target:
            header.append("target")
        writer.writerow(header)
        for i, sid in enumerate(dataset.sample_ids):
            row = [sid, *(fmt_float(v) for v in dataset.features[i])]
            if with_target:
                if dataset.task_kind == "regression":
                    row.append(fmt_float(dataset.target[i]))
                else:
                    row.append(dataset.class_names[dataset.target[i]])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# interpretation artifacts

@dataclass(frozen=True)
class FeatureRanking:
    """Per-feature importance scores plus the ranking they induce.

    ``order[r]`` is the feature index at rank ``r`` (best first).  Ties in
    score break toward the lower feature index, so the order is a pure
    function of the scores.
    """

    scores: np.ndarray
    order: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("scores must be a non-empty vector")
        if not np.all(np.isfinite(s)):
            raise ValueError("importance scores must be finite")
        o = np.asarray(self.order, dtype=int)
        if sorted(o.tolist()) != list(range(s.size)):
            raise ValueError("order must be a permutation of feature indices")
        expected = rank_order(s)
        if not np.array_equal(o, expected):
            raise ValueError("order is inconsistent with scores under the tie rule")
        object.__setattr__(self, "scores", _freeze(s))
        object.__setattr__(self, "order", _freeze(o))

    @classmethod
    def from_scores(cls, scores) -> "FeatureRanking":
        s = np.asarray(scores, dtype=float)
        return cls(scores=s, order=rank_order(s))

    @property
    def n_features(self) -> int:
        return self.scores.size

    def top(self, k: int) -> np.ndarray:
        return self.order[:k]


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending feature index."""
    s = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(s.size), -s))


@dataclass(frozen=True)
class ClusterLabeling:
    """Cluster assignment over named samples; labels live in [0, k)."""

    sample_ids: tuple
    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int)
        if lab.ndim != 1 or lab.size == 0:
            raise ValueError("labels must be a non-empty vector")
        if len(self.sample_ids) != lab.size:
            raise ValueError("sample_ids length does not match labels")
        if len(set(self.sample_ids)) != lab.size:
            raise ValueError("sample ids must be unique")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if lab.min() < 0 or lab.max() >= self.k:
            raise ValueError(f"labels must lie in [0, {self.k})")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def n_samples(self) -> int:
        return self.labels.size

    def restrict(self, ids: Sequence[SampleId]) -> "ClusterLabeling":
        pos = {sid: i for i, sid in enumerate(self.sample_ids)}
        idx = [pos[s] for s in ids]
        return ClusterLabeling(sample_ids=tuple(ids), labels=self.labels[idx], k=self.k)


@dataclass(frozen=True)
class Embedding:
    """Low-dimensional coordinates over named samples (n x rank)."""

    sample_ids: tuple
    coords: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.coords, dtype=float)
        if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
            raise ValueError("coords must be a non-empty 2-d array")
        if not np.all(np.isfinite(C)):
            raise ValueError("embedding coordinates must be finite")
        if len(self.sample_ids) != C.shape[0]:
            raise ValueError("sample_ids length does not match coords rows")
        if len(set(self.sample_ids)) != C.shape[0]:
            raise ValueError("sample ids must be unique")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "coords", _freeze(C))

    @property
    def rank(self) -> int:
        return self.coords.shape[1]

    @property
    def n_samples(self) -> int:
        return self.coords.shape[0]

    def restrict(self, ids: Sequence[SampleId]) -> "Embedding":
        pos = {sid: i for i, sid in enumerate(self.sample_ids)}
        idx = [pos[s] for s in ids]
        return Embedding(sample_ids=tuple(ids), coords=self.coords[idx])


@dataclass(frozen=True)
class PredictionSet:
    """Held-out predictions for one fitted model.

    ``task`` selects the payload type: float predictions for regression,
    integer label codes (into the training alphabet) for classification.
    """

    sample_ids: tuple
    values: np.ndarray
    task: str
    n_classes: Optional[int] = None

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown prediction task {self.task!r}")
        if self.task == "regression":
            v = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError("regression predictions must be finite")
        else:
            v = np.asarray(self.values, dtype=int)
            if self.n_classes is None:
                raise ValueError("classification predictions require n_classes")
            if v.size and (v.min() < 0 or v.max() >= self.n_classes):
                raise ValueError("predicted labels outside the training alphabet")
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty vector")
        if len(self.sample_ids) != v.size:
            raise ValueError("sample_ids length does not match values")
        if len(set(self.sample_ids)) != v.size:
            raise ValueError("sample ids must be unique")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "values", _freeze(v))

    def restrict(self, ids: Sequence[SampleId]) -> "PredictionSet":
        pos = {sid: i for i, sid in enumerate(self.sample_ids)}
        idx = [pos[s] for s in ids]
        return PredictionSet(
            sample_ids=tuple(ids),
            values=self.values[idx],
            task=self.task,
            n_classes=self.n_classes,
        )


Artifact = Union[FeatureRanking, ClusterLabeling, Embedding]

ARTIFACT_TASKS = ("feature_importance", "clustering", "dimension_reduction")


def artifact_task(artifact: Artifact) -> str:
    if isinstance(artifact, FeatureRanking):
        return "feature_importance"
    if isinstance(artifact, ClusterLabeling):
        return "clustering"
    if isinstance(artifact, Embedding):
        return "dimension_reduction"
    raise TypeError(f"not an interpretation artifact: {type(artifact).__name__}")
