"""Pipeline execution: materialize perturbation plans, run every
(dataset, method, variant, repeat) cell, and persist artifacts + statuses.

Artifacts land under ``artifacts/<dataset>/<method>/<variant>/<repeat>.csv``
with a JSON sidecar each; completed repeats are skipped on re-run via a
content hash of (dataset bytes, method signature, plan hash, repeat).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .. import learners
from ..core import PredictionSet, TabularDataset, load_csv, save_csv, standardize
from ..distances import METRICS as DISTANCE_METRICS
from ..perturb import (
    PerturbationPlan,
    derive_seed,
    make_noise_plan,
    make_splits,
    make_subsamples,
    realize,
)
from ..runner import RunnerManifest, RunnerResult, invoke, write_interpretation, write_predictions
from ..stability import accuracy_clustering
from .config import PipelineConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1  # bump to invalidate every cached artifact


@dataclass(frozen=True)
class DatasetBundle:
    """A loaded dataset plus the oracle information the pipeline needs."""

    cfg: object
    data: TabularDataset
    truth: Optional[np.ndarray]  # class codes for accuracy, if known
    truth_names: Optional[tuple]
    k: Optional[int]  # oracle cluster count
    source_hash: str

    @property
    def id(self) -> str:
        return self.cfg.id


@dataclass(frozen=True)
class Cell:
    """One (dataset, method, variant) unit of work."""

    dataset_id: str
    method_id: str
    task: str
    variant: str  # e.g. "base", "s1", "r5", "s1-r5"
    plan_key: str  # which plan the variant replays
    rank: Optional[int] = None
    sigma: Optional[float] = None


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def config_hash(cfg: PipelineConfig) -> str:
    """Hash of the scientific content only: execution knobs (workers,
    output location, figure toggle) don't change what a run measures."""
    doc = cfg.to_json_dict()
    for key in ("workers", "output_dir", "figures"):
        doc.pop(key)
    return _sha256_text(json.dumps(doc, sort_keys=True))


def load_datasets(cfg: PipelineConfig) -> list:
    """Load + standardize every dataset; truth comes from the classification
    target or the declared true-label column."""
    bundles = []
    for dc in cfg.datasets:
        source_hash = _sha256_file(dc.path)
        if dc.task == "unsupervised" and dc.true_labels:
            labeled = load_csv(dc.path, target=dc.true_labels,
                               task="classification", id_column=dc.id_column)
            truth, truth_names = labeled.target, labeled.class_names
            ds = TabularDataset(
                sample_ids=labeled.sample_ids,
                feature_names=labeled.feature_names,
                features=labeled.features,
                task_kind="unsupervised",
            )
        else:
            ds = load_csv(dc.path, target=dc.target, task=dc.task,
                          id_column=dc.id_column)
            truth = ds.target if dc.task == "classification" else None
            truth_names = ds.class_names
        if cfg.standardize:
            ds = standardize(ds)
        k = dc.k_clusters
        if k is None and truth is not None:
            k = int(truth.max()) + 1  # oracle cluster count = class count
        bundles.append(DatasetBundle(cfg=dc, data=ds, truth=truth,
                                     truth_names=truth_names, k=k,
                                     source_hash=source_hash))
    return bundles


# -- plans ---------------------------------------------------------------------

def plan_keys(cfg: PipelineConfig) -> list:
    if cfg.perturbation.kind == "noise":
        return [f"s{i}" for i in range(len(cfg.perturbation.sigmas))]
    return ["base"]


def build_plans(cfg: PipelineConfig, bundles) -> dict:
    """One plan per (dataset, plan key); noise sweeps get a plan per sigma."""
    plans = {}
    p = cfg.perturbation
    for di, b in enumerate(bundles):
        dataset_seed = derive_seed(cfg.seed, di)
        n = b.data.n_samples
        if p.kind == "split":
            plans[(b.id, "base")] = make_splits(n, ratio=p.ratio,
                                                repeats=p.repeats, seed=dataset_seed)
        elif p.kind == "subsample":
            plans[(b.id, "base")] = make_subsamples(n, fraction=p.fraction,
                                                    repeats=p.repeats, seed=dataset_seed)
        else:
            for si, sigma in enumerate(p.sigmas):
                plans[(b.id, f"s{si}")] = make_noise_plan(
                    n, dist=p.dist, sigma=sigma, repeats=p.repeats,
                    seed=derive_seed(dataset_seed, si),
                )
    return plans


def write_plans(run_dir: Path, plans: dict) -> None:
    plan_dir = run_dir / "plans"
    plan_dir.mkdir(parents=True, exist_ok=True)
    for (dataset_id, key), plan in sorted(plans.items()):
        (plan_dir / f"{dataset_id}-{key}.json").write_text(plan.to_json())


def read_plans(run_dir: Path) -> dict:
    plans = {}
    for path in sorted((run_dir / "plans").glob("*.json")):
        dataset_id, _, key = path.stem.rpartition("-")
        plans[(dataset_id, key)] = PerturbationPlan.from_json(path.read_text())
    return plans


# -- cells ----------------------------------------------------------------------

def _compatible(bundle: DatasetBundle, task: str) -> bool:
    if task == "feature_importance":
        return bundle.cfg.task in ("regression", "classification")
    if task == "clustering":
        return bundle.k is not None
    return True


def dataset_ranks(dc) -> list:
    """Headline rank first, then the remaining sweep ranks ascending."""
    extras = sorted(set(dc.rank_sweep) - {dc.rank})
    return [dc.rank] + extras


def enumerate_cells(cfg: PipelineConfig, bundles) -> list:
    cells = []
    keys = plan_keys(cfg)
    sigma_of = {f"s{i}": s for i, s in enumerate(cfg.perturbation.sigmas)}
    for b in bundles:
        for m in cfg.methods:
            task = m.artifact_task
            if not _compatible(b, task):
                continue
            for key in keys:
                sigma = sigma_of.get(key)
                if task == "dimension_reduction":
                    for rank in dataset_ranks(b.cfg):
                        tag = f"r{rank}" if key == "base" else f"{key}-r{rank}"
                        cells.append(Cell(b.id, m.id, task, tag, key,
                                          rank=rank, sigma=sigma))
                else:
                    cells.append(Cell(b.id, m.id, task, key, key, sigma=sigma))
    return cells


def headline_variant(cfg: PipelineConfig, dc, task: str) -> str:
    """The variant tag the summary tables report (sweeps live in series)."""
    key = plan_keys(cfg)[0]
    if task == "dimension_reduction":
        return f"r{dc.rank}" if key == "base" else f"{key}-r{dc.rank}"
    return key


# -- hierarchical "best" distance resolution --------------------------------------

def resolve_best_distances(cfg: PipelineConfig, bundles) -> dict:
    """Pick the accuracy-maximizing distance per (method, dataset) on the
    unperturbed data; ties break in DISTANCE_METRICS enumeration order."""
    resolved = {}
    for m in cfg.methods:
        if not (m.kind == "builtin" and m.name == "hierarchical"
                and m.params.get("distance") == "best"):
            continue
        linkage = m.params.get("linkage", "average")
        usable = DISTANCE_METRICS if linkage != "ward" else ("euclidean",)
        for b in bundles:
            if not _compatible(b, "clustering") or b.truth is None:
                continue
            best = None
            for dist in usable:
                labels = learners.hierarchical(b.data, b.k, linkage=linkage,
                                               distance=dist)
                acc = accuracy_clustering(labels, b.truth)
                if best is None or acc > best[1]:  # strict: first wins ties
                    best = (dist, acc)
            resolved[(m.id, b.id)] = best[0]
    return resolved


# -- builtin dispatch ----------------------------------------------------------------

def _linear_model(name: str, train, params: dict):
    fit = learners.ridge_model if name == "ridge" else learners.lasso_model
    return fit(train, folds=params.get("folds", 5), lam=params.get("lam"),
               fit_intercept=params.get("fit_intercept", True))


def _predictions(model, test: TabularDataset) -> PredictionSet:
    values = model.predict(test.features)
    if test.task_kind == "classification":
        return PredictionSet(sample_ids=test.sample_ids, values=values,
                             task="classification", n_classes=test.n_classes)
    return PredictionSet(sample_ids=test.sample_ids, values=values, task="regression")


def fit_builtin(ctx, cell: Cell, method, bundle: DatasetBundle, realized, repeat):
    """Run one builtin method on one realized repeat -> (artifact, preds)."""
    params = method.params
    if cell.task == "feature_importance":
        # subsampling yields no held-out part; rankings still compare, but
        # there are no predictions to track
        train, test = realized if isinstance(realized, tuple) else (realized, None)
        if method.name == "permutation":
            base = _linear_model(params.get("model", "ridge"), train, params)
            art = learners.permutation_importance(
                base, test, repeats=params.get("repeats", 10), seed=repeat.seed
            )
            return art, _predictions(base, test)
        model = _linear_model(method.name, train, params)
        return model.importance(), None if test is None else _predictions(model, test)

    data = realized[0] if isinstance(realized, tuple) else realized
    if cell.task == "clustering":
        k = bundle.k
        if method.name == "kmeans":
            art = learners.kmeans(data, k, init=params.get("init", "kmeanspp"),
                                  max_iter=params.get("max_iter", 300), seed=repeat.seed)
        elif method.name == "minibatch_kmeans":
            art = learners.minibatch_kmeans(
                data, k, batch_size=params.get("batch_size", 100),
                max_iter=params.get("max_iter", 100), seed=repeat.seed)
        elif method.name == "hierarchical":
            dist = params.get("distance", "euclidean")
            if dist == "best":
                dist = ctx.resolved[(method.id, cell.dataset_id)]
            art = learners.hierarchical(data, k, linkage=params.get("linkage", "average"),
                                        distance=dist)
        else:
            art = learners.spectral_cluster(
                data, k, affinity=params.get("affinity", "knn"),
                n_neighbors=params.get("n_neighbors", 10),
                gamma=params.get("gamma"), seed=repeat.seed)
        return art, None

    rank = cell.rank
    if method.name == "pca":
        return learners.pca(data, rank), None
    if method.name == "random_projection":
        return learners.random_projection(data, rank, seed=repeat.seed), None
    if method.name == "metric_mds":
        return learners.metric_mds(data, rank), None
    if method.name == "isomap":
        return learners.isomap(data, rank,
                               n_neighbors=params.get("n_neighbors", 10)), None
    return learners.spectral_embedding(
        data, rank, affinity=params.get("affinity", "knn"),
        n_neighbors=params.get("n_neighbors", 10), gamma=params.get("gamma")), None


# -- runner dispatch -----------------------------------------------------------------

def _atomic_write_csv(dataset: TabularDataset, path: Path) -> None:
    """Write once even under concurrent callers (same bytes either way)."""
    if path.exists():
        return
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        save_csv(dataset, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_runner(ctx, cell: Cell, method, bundle: DatasetBundle, realized, repeat,
               art_path: Path, preds_path: Path, log_path: Path) -> RunnerResult:
    pert_dir = ctx.run_dir / "perturbed" / cell.dataset_id / cell.plan_key
    pert_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(realized, tuple):
        train, test = realized
    else:
        train, test = realized, None
    train_path = pert_dir / f"{repeat.index}.train.csv"
    _atomic_write_csv(train, train_path)
    test_path = None
    if test is not None:
        test_path = pert_dir / f"{repeat.index}.test.csv"
        _atomic_write_csv(test, test_path)

    supervised = cell.task == "feature_importance" and test is not None
    expected = {}
    if cell.task == "feature_importance":
        expected["n_features"] = bundle.data.n_features
    elif cell.task == "clustering":
        expected["sample_ids"] = list(train.sample_ids)
        expected["k"] = bundle.k
    else:
        expected["sample_ids"] = list(train.sample_ids)
        expected["rank"] = cell.rank
    if supervised:
        expected["test_ids"] = list(test.sample_ids)
        expected["target_task"] = bundle.cfg.task
        expected["class_names"] = (list(train.class_names)
                                   if train.class_names else None)

    manifest = RunnerManifest(
        task=cell.task,
        train_path=str(train_path),
        test_path=str(test_path) if test_path else None,
        interpretation_path=str(art_path),
        predictions_path=str(preds_path) if supervised else None,
        target_column="target" if bundle.cfg.target else None,
        target_task=bundle.cfg.task if bundle.cfg.target else None,
        k_clusters=bundle.k if cell.task == "clustering" else None,
        rank=cell.rank,
        seed=repeat.seed,
        params=method.params,
        timeout_seconds=method.timeout_seconds,
    )
    return invoke(list(method.command), manifest, log_path=log_path, expected=expected)


# -- execution -------------------------------------------------------------------------

@dataclass
class RunContext:
    cfg: PipelineConfig
    run_dir: Path
    bundles: dict  # id -> DatasetBundle
    plans: dict  # (dataset_id, plan_key) -> PerturbationPlan
    resolved: dict  # (method_id, dataset_id) -> distance

    def cell_dir(self, cell: Cell) -> Path:
        return (self.run_dir / "artifacts" / cell.dataset_id
                / cell.method_id / cell.variant)


def _skip_key(ctx: RunContext, cell: Cell, repeat) -> str:
    method = ctx.cfg.method(cell.method_id)
    sig = {
        "schema": SCHEMA_VERSION,
        "dataset": ctx.bundles[cell.dataset_id].source_hash,
        "standardize": ctx.cfg.standardize,
        "method": {"id": method.id, "kind": method.kind, "name": method.name,
                   "command": list(method.command), "params": method.params},
        "resolved_distance": ctx.resolved.get((cell.method_id, cell.dataset_id)),
        "plan": ctx.plans[(cell.dataset_id, cell.plan_key)].content_hash(),
        "rank": cell.rank,
        "repeat": repeat.index,
    }
    return _sha256_text(json.dumps(sig, sort_keys=True))


def run_cell_repeat(ctx: RunContext, cell: Cell, repeat) -> dict:
    """Execute one repeat, or reuse its cached result; returns the sidecar."""
    cell_dir = ctx.cell_dir(cell)
    cell_dir.mkdir(parents=True, exist_ok=True)
    art_path = cell_dir / f"{repeat.index}.csv"
    preds_path = cell_dir / f"{repeat.index}.preds.csv"
    sidecar_path = cell_dir / f"{repeat.index}.json"
    key = _skip_key(ctx, cell, repeat)

    if sidecar_path.exists():
        try:
            cached = json.loads(sidecar_path.read_text())
        except (OSError, json.JSONDecodeError):
            cached = None
        # only completed work short-circuits; failed repeats retry on re-run
        if (cached and cached.get("skip_key") == key
                and cached.get("status") == "ok" and art_path.exists()):
            return cached

    bundle = ctx.bundles[cell.dataset_id]
    method = ctx.cfg.method(cell.method_id)
    plan = ctx.plans[(cell.dataset_id, cell.plan_key)]
    record = {"repeat": repeat.index, "seed": repeat.seed, "status": "ok",
              "skip_key": key}
    try:
        realized = realize(bundle.data, plan, repeat)
        if method.kind == "builtin":
            artifact, preds = fit_builtin(ctx, cell, method, bundle, realized, repeat)
            write_interpretation(artifact, art_path)
            if preds is not None:
                write_predictions(preds, preds_path,
                                  class_names=bundle.data.class_names)
        else:
            res = run_runner(ctx, cell, method, bundle, realized, repeat,
                             art_path, preds_path, cell_dir / f"{repeat.index}.log")
            record["status"] = res.status
            record["wall_time"] = res.wall_time
            if res.exit_code is not None:
                record["exit_code"] = res.exit_code
            if res.reason:
                record["reason"] = res.reason
    except Exception as exc:  # a failed repeat is a status, not a crash
        record["status"] = "error"
        record["reason"] = f"{type(exc).__name__}: {exc}"
        log.warning("%s/%s/%s repeat %d failed: %s", cell.dataset_id,
                    cell.method_id, cell.variant, repeat.index, record["reason"])
    if record["status"] != "ok":
        for stale in (art_path, preds_path):
            if stale.exists():
                stale.unlink()
    sidecar_path.write_text(json.dumps(record, sort_keys=True))
    return record


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute the whole pipeline; returns a summary with per-cell statuses.

    The caller (CLI) decides exit codes from summary["n_failed"].
    """
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.to_json_dict(), sort_keys=True, indent=1)
    )
    bundles = load_datasets(cfg)
    by_id = {b.id: b for b in bundles}
    plans = build_plans(cfg, bundles)
    write_plans(run_dir, plans)
    resolved = resolve_best_distances(cfg, bundles)
    if resolved:
        (run_dir / "resolved_params.json").write_text(json.dumps(
            {f"{m}/{d}": dist for (m, d), dist in sorted(resolved.items())},
            sort_keys=True, indent=1,
        ))
    ctx = RunContext(cfg=cfg, run_dir=run_dir, bundles=by_id, plans=plans,
                     resolved=resolved)
    cells = enumerate_cells(cfg, bundles)

    jobs = [(cell, repeat) for cell in cells
            for repeat in plans[(cell.dataset_id, cell.plan_key)].repeats]
    statuses = {}
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = {pool.submit(run_cell_repeat, ctx, cell, repeat): (cell, repeat)
                   for cell, repeat in jobs}
        for fut, (cell, repeat) in futures.items():
            record = fut.result()
            statuses.setdefault(
                (cell.dataset_id, cell.method_id, cell.variant), {}
            )[repeat.index] = record["status"]

    cell_rows = []
    n_failed = 0
    for cell in cells:
        recs = statuses[(cell.dataset_id, cell.method_id, cell.variant)]
        bad = sum(1 for s in recs.values() if s != "ok")
        n_failed += bad
        cell_rows.append({
            "dataset": cell.dataset_id,
            "method": cell.method_id,
            "variant": cell.variant,
            "n_repeats": len(recs),
            "n_ok": len(recs) - bad,
            "n_failed": bad,
        })
    summary = {
        "run_dir": str(run_dir),
        "config_hash": config_hash(cfg),
        "n_cells": len(cells),
        "n_repeats": len(jobs),
        "n_failed": n_failed,
        "cells": cell_rows,
    }
    (run_dir / "run_summary.json").write_text(json.dumps(summary, sort_keys=True,
                                                         indent=1))
    return summary
