"""Pipeline configuration: one JSON document describing datasets, methods,
the perturbation regime, metric choices, and execution knobs.

Validation is exhaustive and fail-fast: every dangling reference (missing
dataset file, absent target column, unresolvable runner binary, unknown
method or metric name) is collected and reported before any work starts.
"""
from __future__ import annotations

import csv
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

ARTIFACT_TASKS = ("feature_importance", "clustering", "dimension_reduction")

# builtin method name -> artifact task it produces
BUILTIN_TASKS = {
    "ridge": "feature_importance",
    "lasso": "feature_importance",
    "permutation": "feature_importance",
    "kmeans": "clustering",
    "minibatch_kmeans": "clustering",
    "hierarchical": "clustering",
    "spectral": "clustering",
    "pca": "dimension_reduction",
    "random_projection": "dimension_reduction",
    "metric_mds": "dimension_reduction",
    "isomap": "dimension_reduction",
    "spectral_embedding": "dimension_reduction",
}

# accepted hyperparameter names per builtin (typos fail validation)
BUILTIN_PARAMS = {
    "ridge": {"folds", "lam", "fit_intercept"},
    "lasso": {"folds", "lam", "fit_intercept"},
    "permutation": {"model", "repeats", "folds", "lam"},
    "kmeans": {"init", "max_iter"},
    "minibatch_kmeans": {"batch_size", "max_iter"},
    "hierarchical": {"linkage", "distance"},
    "spectral": {"affinity", "n_neighbors", "gamma"},
    "pca": set(),
    "random_projection": set(),
    "metric_mds": set(),
    "isomap": {"n_neighbors"},
    "spectral_embedding": {"affinity", "n_neighbors", "gamma"},
}

LINKAGES = ("single", "complete", "average", "ward")
DISTANCES = ("euclidean", "manhattan", "chebyshev", "cosine", "canberra")
RANK_METRICS = ("ao", "jaccard", "kendall")
PARTITION_METRICS = ("ari", "fm", "mi", "v")
NN_METRICS = ("nn_auc", "nn_jaccard")
DEFAULT_TIMEOUT = 43_200


class ConfigError(Exception):
    """All validation problems for one config, reported together."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class DatasetConfig:
    id: str
    path: str  # absolute after load_config
    task: str = "unsupervised"  # regression | classification | unsupervised
    target: Optional[str] = None
    id_column: Optional[str] = None
    true_labels: Optional[str] = None  # unsupervised accuracy column
    k_clusters: Optional[int] = None
    rank: int = 2
    rank_sweep: tuple = ()


@dataclass(frozen=True)
class MethodConfig:
    id: str
    kind: str  # builtin | runner
    name: Optional[str] = None  # builtin name
    command: tuple = ()  # runner argv
    task: Optional[str] = None  # runner task; builtins derive it
    params: dict = field(default_factory=dict)
    timeout_seconds: int = DEFAULT_TIMEOUT

    @property
    def artifact_task(self) -> Optional[str]:
        if self.kind == "builtin":
            return BUILTIN_TASKS.get(self.name)  # None while invalid
        return self.task


@dataclass(frozen=True)
class PerturbationConfig:
    kind: str  # split | subsample | noise
    repeats: int = 100
    ratio: float = 0.7
    fraction: float = 0.7
    dist: str = "normal"
    sigmas: tuple = (0.15,)


@dataclass(frozen=True)
class MetricsConfig:
    rank_metric: str = "ao"
    k: int = 10
    kendall_p: float = 0.0
    k_sweep: tuple = (1, 30)
    partition_metric: str = "ari"
    nn_metric: str = "nn_auc"
    grid_size: int = 50
    sample_cap: int = 500


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: str
    datasets: tuple
    methods: tuple
    perturbation: PerturbationConfig
    metrics: MetricsConfig = MetricsConfig()
    seed: int = 0
    workers: int = 4
    standardize: bool = True
    figures: bool = True
    mse_norm_scope: str = "per_repeat"

    def dataset(self, dataset_id: str) -> DatasetConfig:
        return next(d for d in self.datasets if d.id == dataset_id)

    def method(self, method_id: str) -> MethodConfig:
        return next(m for m in self.methods if m.id == method_id)

    def to_json_dict(self) -> dict:
        return {
            "version": 1,
            "seed": self.seed,
            "workers": self.workers,
            "output_dir": self.output_dir,
            "standardize": self.standardize,
            "figures": self.figures,
            "mse_norm_scope": self.mse_norm_scope,
            "datasets": [
                {
                    "id": d.id,
                    "path": d.path,
                    "task": d.task,
                    "target": d.target,
                    "id_column": d.id_column,
                    "true_labels": d.true_labels,
                    "k_clusters": d.k_clusters,
                    "rank": d.rank,
                    "rank_sweep": list(d.rank_sweep),
                }
                for d in self.datasets
            ],
            "methods": [
                {
                    "id": m.id,
                    "kind": m.kind,
                    "name": m.name,
                    "command": list(m.command),
                    "task": m.task,
                    "params": m.params,
                    "timeout_seconds": m.timeout_seconds,
                }
                for m in self.methods
            ],
            "perturbation": {
                "kind": self.perturbation.kind,
                "repeats": self.perturbation.repeats,
                "ratio": self.perturbation.ratio,
                "fraction": self.perturbation.fraction,
                "dist": self.perturbation.dist,
                "sigmas": list(self.perturbation.sigmas),
            },
            "metrics": {
                "rank_metric": self.metrics.rank_metric,
                "k": self.metrics.k,
                "kendall_p": self.metrics.kendall_p,
                "k_sweep": list(self.metrics.k_sweep),
                "partition_metric": self.metrics.partition_metric,
                "nn_metric": self.metrics.nn_metric,
                "grid_size": self.metrics.grid_size,
                "sample_cap": self.metrics.sample_cap,
            },
        }


def from_json_dict(raw: dict) -> PipelineConfig:
    """Rebuild a config from the normalized form ``to_json_dict`` writes.

    This is the re-scoring path: the run directory's config.json was
    validated when the run started, so no file checks are repeated here.
    """
    if raw.get("version") != 1:
        raise ConfigError([f"unsupported config version {raw.get('version')!r}"])
    return PipelineConfig(
        output_dir=raw["output_dir"],
        datasets=tuple(
            DatasetConfig(
                id=d["id"], path=d["path"], task=d["task"], target=d["target"],
                id_column=d["id_column"], true_labels=d["true_labels"],
                k_clusters=d["k_clusters"], rank=d["rank"],
                rank_sweep=tuple(d["rank_sweep"]),
            )
            for d in raw["datasets"]
        ),
        methods=tuple(
            MethodConfig(
                id=m["id"], kind=m["kind"], name=m["name"],
                command=tuple(m["command"]), task=m["task"], params=m["params"],
                timeout_seconds=m["timeout_seconds"],
            )
            for m in raw["methods"]
        ),
        perturbation=PerturbationConfig(
            kind=raw["perturbation"]["kind"],
            repeats=raw["perturbation"]["repeats"],
            ratio=raw["perturbation"]["ratio"],
            fraction=raw["perturbation"]["fraction"],
            dist=raw["perturbation"]["dist"],
            sigmas=tuple(raw["perturbation"]["sigmas"]),
        ),
        metrics=MetricsConfig(
            rank_metric=raw["metrics"]["rank_metric"],
            k=raw["metrics"]["k"],
            kendall_p=raw["metrics"]["kendall_p"],
            k_sweep=tuple(raw["metrics"]["k_sweep"]),
            partition_metric=raw["metrics"]["partition_metric"],
            nn_metric=raw["metrics"]["nn_metric"],
            grid_size=raw["metrics"]["grid_size"],
            sample_cap=raw["metrics"]["sample_cap"],
        ),
        seed=raw["seed"],
        workers=raw["workers"],
        standardize=raw["standardize"],
        figures=raw["figures"],
        mse_norm_scope=raw["mse_norm_scope"],
    )


def _is_slug(s) -> bool:
    return (
        isinstance(s, str)
        and 0 < len(s) <= 64
        and all(c.isalnum() or c in "_-" for c in s)
    )


def _get(obj: dict, key, default, errors, where, types, check=None, msg=None):
    value = obj.get(key, default)
    if value is None and default is None:
        return None
    if not isinstance(value, types) or isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        errors.append(f"{where}: {key} must be {types}, got {value!r}")
        return default
    if check is not None and not check(value):
        errors.append(f"{where}: {msg or f'bad {key}'} (got {value!r})")
        return default
    return value


def _csv_header(path) -> Optional[list]:
    try:
        with open(path, newline="") as fh:
            row = next(csv.reader(fh), None)
        return None if row is None else [c.strip() for c in row]
    except OSError:
        return None


def _parse_dataset(raw: dict, base: Path, has_dr: bool, errors: list) -> DatasetConfig:
    where = f"dataset {raw.get('id', '?')!r}"
    did = raw.get("id")
    if not _is_slug(did):
        errors.append(f"{where}: id must be a short [A-Za-z0-9_-] slug")
        did = str(did)
    task = raw.get("task", "unsupervised")
    if task not in ("regression", "classification", "unsupervised"):
        errors.append(f"{where}: unknown task {task!r}")
        task = "unsupervised"
    path = raw.get("path")
    header = None
    if not isinstance(path, str) or not path:
        errors.append(f"{where}: path is required")
        path = ""
    else:
        path = str((base / path).resolve()) if not os.path.isabs(path) else path
        if not os.path.isfile(path):
            errors.append(f"{where}: dataset file not found: {path}")
        else:
            header = _csv_header(path)
            if header is None:
                errors.append(f"{where}: {path} is empty or unreadable")

    target = raw.get("target")
    if task in ("regression", "classification"):
        if not target:
            errors.append(f"{where}: supervised task requires a target column")
    elif target:
        errors.append(f"{where}: unsupervised dataset cannot have a target")
        target = None
    true_labels = raw.get("true_labels")
    if true_labels and task != "unsupervised":
        errors.append(f"{where}: true_labels only applies to unsupervised datasets")
        true_labels = None
    for col_key, col in (("target", target), ("true_labels", true_labels),
                         ("id_column", raw.get("id_column"))):
        if col and header is not None and col not in header:
            errors.append(f"{where}: {col_key} column {col!r} not in {path}")

    k = raw.get("k_clusters")
    if k is not None and (not isinstance(k, int) or isinstance(k, bool) or k < 2):
        errors.append(f"{where}: k_clusters must be an integer >= 2")
        k = None
    rank = _get(raw, "rank", 2, errors, where, int, lambda r: r >= 1, "rank must be >= 1")
    # feature count from the header bounds embedding ranks (fail fast on the
    # headline rank; the default sweep just adapts to small datasets)
    n_feat = None
    if header is not None:
        n_feat = len(header) - sum(
            1 for c in (target, true_labels, raw.get("id_column")) if c in header
        )
        if rank > n_feat:
            errors.append(f"{where}: rank {rank} exceeds the {n_feat} features in {path}")
    sweep = raw.get("rank_sweep")
    if sweep is None:
        sweep = [r for r in (2, 5, 10) if n_feat is None or r <= n_feat] if has_dr else []
    if not isinstance(sweep, (list, tuple)) or not all(
        isinstance(r, int) and not isinstance(r, bool) and r >= 1 for r in sweep
    ):
        errors.append(f"{where}: rank_sweep must be a list of integers >= 1")
        sweep = ()
    elif n_feat is not None and any(r > n_feat for r in sweep):
        errors.append(f"{where}: rank_sweep entries exceed the {n_feat} features in {path}")
    unknown = set(raw) - {"id", "path", "task", "target", "id_column",
                          "true_labels", "k_clusters", "rank", "rank_sweep"}
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")
    return DatasetConfig(
        id=did, path=path, task=task, target=target,
        id_column=raw.get("id_column"), true_labels=true_labels,
        k_clusters=k, rank=rank, rank_sweep=tuple(sweep),
    )


def _parse_method(raw: dict, errors: list) -> MethodConfig:
    where = f"method {raw.get('id', '?')!r}"
    mid = raw.get("id")
    if not _is_slug(mid):
        errors.append(f"{where}: id must be a short [A-Za-z0-9_-] slug")
        mid = str(mid)
    kind = raw.get("kind", "builtin")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        errors.append(f"{where}: params must be an object")
        params = {}
    timeout = _get(raw, "timeout_seconds", DEFAULT_TIMEOUT, errors, where, int,
                   lambda t: t >= 1, "timeout_seconds must be >= 1")
    name = raw.get("name")
    command = raw.get("command", [])
    task = raw.get("task")

    if kind == "builtin":
        if name not in BUILTIN_TASKS:
            errors.append(f"{where}: unknown builtin {name!r} "
                          f"(known: {', '.join(sorted(BUILTIN_TASKS))})")
        else:
            bad = set(params) - BUILTIN_PARAMS[name]
            if bad:
                errors.append(f"{where}: unknown params for {name}: {sorted(bad)}")
            _check_builtin_params(name, params, errors, where)
        if command:
            errors.append(f"{where}: builtin methods take no command")
    elif kind == "runner":
        if task not in ARTIFACT_TASKS:
            errors.append(f"{where}: runner task must be one of {ARTIFACT_TASKS}")
        if (not isinstance(command, (list, tuple)) or not command
                or not all(isinstance(c, str) for c in command)):
            errors.append(f"{where}: command must be a non-empty list of strings")
            command = []
        else:
            exe = command[0]
            resolved = exe if os.path.isabs(exe) else shutil.which(exe)
            if resolved is None or not (os.path.isfile(resolved) and os.access(resolved, os.X_OK)):
                errors.append(f"{where}: runner binary not found or not executable: {exe!r}")
    else:
        errors.append(f"{where}: kind must be builtin or runner")

    unknown = set(raw) - {"id", "kind", "name", "command", "task", "params", "timeout_seconds"}
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")
    return MethodConfig(id=mid, kind=kind, name=name, command=tuple(command),
                        task=task, params=params, timeout_seconds=timeout)


def _check_builtin_params(name: str, params: dict, errors: list, where: str):
    def bad(msg):
        errors.append(f"{where}: {msg}")

    if name in ("ridge", "lasso", "permutation"):
        folds = params.get("folds", 5)
        if not isinstance(folds, int) or folds < 2:
            bad("folds must be an integer >= 2")
        lam = params.get("lam")
        if lam is not None and (not isinstance(lam, (int, float)) or lam < 0):
            bad("lam must be a number >= 0")
    if name == "permutation":
        if params.get("model", "ridge") not in ("ridge", "lasso"):
            bad("permutation model must be ridge or lasso")
        reps = params.get("repeats", 10)
        if not isinstance(reps, int) or reps < 1:
            bad("permutation repeats must be an integer >= 1")
    if name == "kmeans" and params.get("init", "kmeanspp") not in ("random", "kmeanspp"):
        bad("kmeans init must be random or kmeanspp")
    if name == "hierarchical":
        if params.get("linkage", "average") not in LINKAGES:
            bad(f"linkage must be one of {LINKAGES}")
        dist = params.get("distance", "euclidean")
        if dist not in DISTANCES + ("best",):
            bad(f"distance must be one of {DISTANCES} or 'best'")
        if params.get("linkage") == "ward" and dist not in ("euclidean", "best"):
            bad("ward linkage requires euclidean distance")
    if name in ("spectral", "spectral_embedding"):
        if params.get("affinity", "knn") not in ("knn", "rbf"):
            bad("affinity must be knn or rbf")


def _parse_perturbation(raw: dict, errors: list) -> PerturbationConfig:
    where = "perturbation"
    kind = raw.get("kind")
    if kind not in ("split", "subsample", "noise"):
        errors.append(f"{where}: kind must be split, subsample, or noise")
        kind = "split"
    repeats = _get(raw, "repeats", 100, errors, where, int,
                   lambda r: r >= 2, "repeats must be >= 2")
    ratio = _get(raw, "ratio", 0.7, errors, where, (int, float),
                 lambda r: 0 < r < 1, "ratio must lie in (0, 1)")
    fraction = _get(raw, "fraction", 0.7, errors, where, (int, float),
                    lambda f: 0 < f <= 1, "fraction must lie in (0, 1]")
    dist = raw.get("dist", "normal")
    if dist not in ("normal", "laplace"):
        errors.append(f"{where}: dist must be normal or laplace")
        dist = "normal"
    sigmas = raw.get("sigmas", [0.15])
    if (not isinstance(sigmas, (list, tuple)) or not sigmas
            or not all(isinstance(s, (int, float)) and not isinstance(s, bool) and s >= 0
                       for s in sigmas)):
        errors.append(f"{where}: sigmas must be a non-empty list of numbers >= 0")
        sigmas = [0.15]
    if len(set(float(s) for s in sigmas)) != len(sigmas):
        errors.append(f"{where}: sigmas must be distinct")
    unknown = set(raw) - {"kind", "repeats", "ratio", "fraction", "dist", "sigmas"}
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")
    return PerturbationConfig(kind=kind, repeats=repeats, ratio=float(ratio),
                              fraction=float(fraction), dist=dist,
                              sigmas=tuple(float(s) for s in sigmas))


def _parse_metrics(raw: dict, errors: list) -> MetricsConfig:
    where = "metrics"
    rank = raw.get("rank", {})
    part = raw.get("partition", {})
    nn = raw.get("nn", {})
    for sub, obj in (("rank", rank), ("partition", part), ("nn", nn)):
        if not isinstance(obj, dict):
            errors.append(f"{where}.{sub}: must be an object")
    rank = rank if isinstance(rank, dict) else {}
    part = part if isinstance(part, dict) else {}
    nn = nn if isinstance(nn, dict) else {}

    rank_metric = rank.get("metric", "ao")
    if rank_metric not in RANK_METRICS:
        errors.append(f"{where}.rank: metric must be one of {RANK_METRICS}")
        rank_metric = "ao"
    k = _get(rank, "k", 10, errors, f"{where}.rank", int, lambda v: v >= 1, "k must be >= 1")
    kendall_p = _get(rank, "kendall_p", 0.0, errors, f"{where}.rank", (int, float),
                     lambda p: 0 <= p <= 1, "kendall_p must lie in [0, 1]")
    sweep = rank.get("k_sweep", [1, 30])
    if (not isinstance(sweep, (list, tuple)) or len(sweep) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in sweep)
            or not 1 <= sweep[0] <= sweep[1]):
        errors.append(f"{where}.rank: k_sweep must be [lo, hi] with 1 <= lo <= hi")
        sweep = [1, 30]

    part_metric = part.get("metric", "ari")
    if part_metric not in PARTITION_METRICS:
        errors.append(f"{where}.partition: metric must be one of {PARTITION_METRICS}")
        part_metric = "ari"

    nn_metric = nn.get("metric", "nn_auc")
    if nn_metric not in NN_METRICS:
        errors.append(f"{where}.nn: metric must be one of {NN_METRICS}")
        nn_metric = "nn_auc"
    grid = _get(nn, "grid_size", 50, errors, f"{where}.nn", int,
                lambda g: g >= 2, "grid_size must be >= 2")
    cap = _get(nn, "sample_cap", 500, errors, f"{where}.nn", int,
               lambda c: c >= 2, "sample_cap must be >= 2")
    return MetricsConfig(rank_metric=rank_metric, k=k, kendall_p=float(kendall_p),
                         k_sweep=(sweep[0], sweep[1]), partition_metric=part_metric,
                         nn_metric=nn_metric, grid_size=grid, sample_cap=cap)


def _cross_validate(cfg: PipelineConfig, errors: list):
    """Constraints spanning datasets x methods x perturbation."""
    ids = [d.id for d in cfg.datasets]
    if len(set(ids)) != len(ids):
        errors.append("dataset ids must be unique")
    mids = [m.id for m in cfg.methods]
    if len(set(mids)) != len(mids):
        errors.append("method ids must be unique")
    if not cfg.datasets:
        errors.append("at least one dataset is required")
    if not cfg.methods:
        errors.append("at least one method is required")

    kind = cfg.perturbation.kind
    for d in cfg.datasets:
        if kind == "split" and d.task == "unsupervised":
            errors.append(f"dataset {d.id!r}: split perturbation needs a supervised dataset")
        if kind == "noise" and d.task != "unsupervised":
            errors.append(f"dataset {d.id!r}: noise perturbation applies to unsupervised "
                          f"datasets only")

    for m in cfg.methods:
        task = m.artifact_task
        if task is None:
            continue
        compatible = [d for d in cfg.datasets if _compatible(d, task)]
        if cfg.datasets and not compatible:
            errors.append(f"method {m.id!r} ({task}) matches no configured dataset")
        if m.kind == "builtin" and m.name == "permutation" and kind != "split":
            errors.append(f"method {m.id!r}: permutation importance needs held-out data "
                          f"(split perturbation)")
        if (m.kind == "builtin" and m.name == "hierarchical"
                and m.params.get("distance") == "best"):
            for d in compatible:
                if d.task != "classification" and not d.true_labels:
                    errors.append(f"method {m.id!r}: distance 'best' needs true labels "
                                  f"on dataset {d.id!r}")
        if task == "clustering":
            for d in compatible:
                if d.task == "regression" and d.k_clusters is None:
                    errors.append(f"dataset {d.id!r}: clustering methods need k_clusters")


def _compatible(d: DatasetConfig, task: str) -> bool:
    if task == "feature_importance":
        return d.task in ("regression", "classification")
    if task == "clustering":
        return (d.task == "classification" or d.k_clusters is not None
                or d.true_labels is not None)
    return True  # dimension reduction runs on anything


def load_config(path) -> PipelineConfig:
    """Parse + validate a pipeline config; raises ConfigError listing every
    problem found.  Relative dataset paths resolve against the config file."""
    path = Path(path)
    errors: list = []
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])

    base = path.resolve().parent
    methods_raw = raw.get("methods", [])
    if not isinstance(methods_raw, list):
        errors.append("methods must be a list")
        methods_raw = []
    methods = tuple(_parse_method(m, errors) for m in methods_raw if isinstance(m, dict))
    for m in methods_raw:
        if not isinstance(m, dict):
            errors.append(f"methods entries must be objects, got {m!r}")
    has_dr = any(m.artifact_task == "dimension_reduction" for m in methods
                 if m.artifact_task)

    datasets_raw = raw.get("datasets", [])
    if not isinstance(datasets_raw, list):
        errors.append("datasets must be a list")
        datasets_raw = []
    datasets = tuple(
        _parse_dataset(d, base, has_dr, errors) for d in datasets_raw if isinstance(d, dict)
    )
    for d in datasets_raw:
        if not isinstance(d, dict):
            errors.append(f"datasets entries must be objects, got {d!r}")

    perturbation = _parse_perturbation(raw.get("perturbation", {}), errors)
    metrics = _parse_metrics(raw.get("metrics", {}), errors)

    out_dir = raw.get("output_dir")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append("output_dir is required")
        out_dir = ""
    elif not os.path.isabs(out_dir):
        out_dir = str((base / out_dir).resolve())

    seed = _get(raw, "seed", 0, errors, "config", int, lambda s: s >= 0,
                "seed must be >= 0")
    workers = _get(raw, "workers", 4, errors, "config", int, lambda w: w >= 1,
                   "workers must be >= 1")
    standardize = raw.get("standardize", True)
    figures = raw.get("figures", True)
    for flag_name, flag in (("standardize", standardize), ("figures", figures)):
        if not isinstance(flag, bool):
            errors.append(f"{flag_name} must be true or false")
    scope = raw.get("mse_norm_scope", "per_repeat")
    if scope not in ("per_repeat", "per_pair"):
        errors.append("mse_norm_scope must be per_repeat or per_pair")
        scope = "per_repeat"

    unknown = set(raw) - {"version", "seed", "workers", "output_dir", "standardize",
                          "figures", "mse_norm_scope", "datasets", "methods",
                          "perturbation", "metrics"}
    if unknown:
        errors.append(f"config: unknown keys {sorted(unknown)}")

    cfg = PipelineConfig(
        output_dir=out_dir,
        datasets=datasets,
        methods=methods,
        perturbation=perturbation,
        metrics=metrics,
        seed=seed,
        workers=workers,
        standardize=bool(standardize),
        figures=bool(figures),
        mse_norm_scope=scope,
    )
    _cross_validate(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg
