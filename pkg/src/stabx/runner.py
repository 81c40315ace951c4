"""File-based protocol for external interpretation methods.

A runner is any executable invoked with one argument: the path of a JSON
manifest describing the task, the input CSVs, the seed, and where to write
its outputs.  The harness never trusts runner output — everything is parsed
back through the same invariant checks the built-in learners satisfy — and
timeouts kill the whole child process group.
"""
from __future__ import annotations

import csv
import json
import math
import os
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    ARTIFACT_TASKS,
    ClusterLabeling,
    Embedding,
    FeatureRanking,
    PredictionSet,
)

MANIFEST_VERSION = 1
DEFAULT_TIMEOUT = 43_200  # 12 h: generous enough to never bite by accident
TERM_GRACE = 2.0  # seconds between SIGTERM and SIGKILL


class InvalidOutput(ValueError):
    """Runner output violates the protocol schemas or artifact invariants."""


@dataclass(frozen=True)
class RunnerManifest:
    task: str
    train_path: str
    interpretation_path: str
    seed: int
    test_path: Optional[str] = None
    predictions_path: Optional[str] = None
    target_column: Optional[str] = None
    target_task: Optional[str] = None  # regression | classification
    k_clusters: Optional[int] = None
    rank: Optional[int] = None
    params: dict = field(default_factory=dict)
    timeout_seconds: int = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.task not in ARTIFACT_TASKS:
            raise ValueError(f"unknown runner task {self.task!r}")
        if self.task == "clustering" and not self.k_clusters:
            raise ValueError("clustering manifests require k_clusters")
        if self.task == "dimension_reduction" and not self.rank:
            raise ValueError("dimension_reduction manifests require rank")
        if self.timeout_seconds < 1:
            raise ValueError("timeout_seconds must be >= 1")
        for name in ("train_path", "interpretation_path", "test_path", "predictions_path"):
            value = getattr(self, name)
            if value is not None and not os.path.isabs(value):
                raise ValueError(f"{name} must be absolute, got {value!r}")

    def to_json(self) -> str:
        payload = {"version": MANIFEST_VERSION, "task": self.task,
                   "train_path": self.train_path, "seed": self.seed,
                   "timeout_seconds": self.timeout_seconds,
                   "output_paths": {"interpretation": self.interpretation_path}}
        if self.predictions_path:
            payload["output_paths"]["predictions"] = self.predictions_path
        for name in ("test_path", "target_column", "target_task", "k_clusters", "rank"):
            value = getattr(self, name)
            if value is not None:
                payload[name] = value
        if self.params:
            payload["params"] = self.params
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunnerManifest":
        payload = json.loads(text)
        version = payload.get("version")
        if version != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {version!r}")
        out = payload.get("output_paths") or {}
        if "interpretation" not in out:
            raise ValueError("manifest lacks output_paths.interpretation")
        return cls(
            task=payload["task"],
            train_path=payload["train_path"],
            interpretation_path=out["interpretation"],
            predictions_path=out.get("predictions"),
            seed=int(payload["seed"]),
            test_path=payload.get("test_path"),
            target_column=payload.get("target_column"),
            target_task=payload.get("target_task"),
            k_clusters=payload.get("k_clusters"),
            rank=payload.get("rank"),
            params=payload.get("params", {}),
            timeout_seconds=int(payload.get("timeout_seconds", DEFAULT_TIMEOUT)),
        )


@dataclass(frozen=True)
class RunnerResult:
    status: str  # ok | timeout | crash | invalid_output
    wall_time: float
    artifact: Optional[object] = None
    predictions: Optional[PredictionSet] = None
    exit_code: Optional[int] = None
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _kill_group(proc: subprocess.Popen):
    """SIGTERM then SIGKILL the child's whole process group."""
    try:
        pgid = os.getpgid(proc.pid)
    except ProcessLookupError:
        return
    for sig in (signal.SIGTERM, signal.SIGKILL):
        try:
            os.killpg(pgid, sig)
        except ProcessLookupError:
            return
        try:
            proc.wait(timeout=TERM_GRACE)
            return
        except subprocess.TimeoutExpired:
            continue
    proc.wait()


def invoke(
    command: Sequence[str],
    manifest: RunnerManifest,
    *,
    log_path=None,
    expected: Optional[dict] = None,
) -> RunnerResult:
    """Run an external method against a manifest; failures become statuses.

    The manifest is written to a temp file passed as the single argv
    argument; the child starts in its own session so a timeout can kill the
    entire process group.  ``expected`` carries the validation context
    (sample ids, feature count) for parsing the outputs.
    """
    with tempfile.NamedTemporaryFile(
        "w", suffix=".manifest.json", delete=False
    ) as fh:
        fh.write(manifest.to_json())
        manifest_path = fh.name
    log_file = open(log_path, "wb") if log_path else subprocess.DEVNULL
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            [*command, manifest_path],
            stdout=log_file,
            stderr=subprocess.STDOUT,
            start_new_session=True,
        )
        try:
            exit_code = proc.wait(timeout=manifest.timeout_seconds)
        except subprocess.TimeoutExpired:
            _kill_group(proc)
            return RunnerResult(status="timeout", wall_time=time.monotonic() - start)
        wall = time.monotonic() - start
        if exit_code != 0:
            return RunnerResult(status="crash", wall_time=wall, exit_code=exit_code)
        try:
            artifact = parse_interpretation(
                manifest.interpretation_path, manifest.task, expected or {}
            )
            predictions = None
            if manifest.predictions_path:
                predictions = parse_predictions(
                    manifest.predictions_path, expected or {}
                )
        except (InvalidOutput, OSError, ValueError) as exc:
            return RunnerResult(
                status="invalid_output", wall_time=wall, reason=str(exc)
            )
        return RunnerResult(
            status="ok", wall_time=wall, artifact=artifact, predictions=predictions
        )
    finally:
        if log_file is not subprocess.DEVNULL:
            log_file.close()
        os.unlink(manifest_path)


# -- output schemas -----------------------------------------------------------

def _read_rows(path, expected_header) -> list:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise InvalidOutput(f"{path}: empty file")
            header = [h.strip() for h in header]
            if expected_header is not None and header != expected_header:
                raise InvalidOutput(
                    f"{path}: header {header!r}, expected {expected_header!r}"
                )
            rows = [row for row in reader if row and any(c.strip() for c in row)]
    except FileNotFoundError:
        raise InvalidOutput(f"{path}: output file missing") from None
    if not rows:
        raise InvalidOutput(f"{path}: no data rows")
    width = len(expected_header) if expected_header is not None else len(header)
    for row in rows:
        if len(row) != width:
            raise InvalidOutput(
                f"{path}: row has {len(row)} fields, expected {width}"
            )
    return rows if expected_header is not None else (header, rows)


def _float(path, text, what) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InvalidOutput(f"{path}: non-numeric {what} {text!r}") from None
    if not math.isfinite(v):
        raise InvalidOutput(f"{path}: non-finite {what}")
    return v


def _norm_ids(raw: list) -> list:
    try:
        return [int(s) for s in raw]
    except ValueError:
        return raw


def _align_ids(path, raw_ids: list, expected_ids) -> list:
    ids = _norm_ids([s.strip() for s in raw_ids])
    if len(set(ids)) != len(ids):
        raise InvalidOutput(f"{path}: duplicate sample ids")
    if expected_ids is not None and set(ids) != set(expected_ids):
        missing = sorted(set(expected_ids) - set(ids), key=str)[:3]
        extra = sorted(set(ids) - set(expected_ids), key=str)[:3]
        raise InvalidOutput(
            f"{path}: sample ids do not match the input data "
            f"(missing {missing}, unexpected {extra})"
        )
    return ids


def parse_interpretation(path, task: str, expected: dict):
    """Parse + validate a runner's interpretation file into an artifact.

    Schemas: feature_importance `feature_index,score`; clustering
    `sample_id,label`; dimension_reduction `sample_id,c1..cr`.
    """
    if task == "feature_importance":
        rows = _read_rows(path, ["feature_index", "score"])
        n_features = expected.get("n_features", len(rows))
        scores = np.full(n_features, np.nan)
        seen = set()
        for idx_s, score_s in rows:
            try:
                idx = int(idx_s)
            except ValueError:
                raise InvalidOutput(f"{path}: bad feature_index {idx_s!r}") from None
            if not 0 <= idx < n_features or idx in seen:
                raise InvalidOutput(
                    f"{path}: feature_index {idx} out of range or repeated"
                )
            seen.add(idx)
            scores[idx] = _float(path, score_s, "score")
        if len(seen) != n_features:
            raise InvalidOutput(
                f"{path}: expected one score per feature (0..{n_features - 1})"
            )
        try:
            return FeatureRanking.from_scores(scores)
        except ValueError as exc:
            raise InvalidOutput(f"{path}: {exc}") from None

    if task == "clustering":
        rows = _read_rows(path, ["sample_id", "label"])
        ids = _align_ids(path, [r[0] for r in rows], expected.get("sample_ids"))
        k = expected.get("k")
        try:
            labels = [int(r[1]) for r in rows]
        except ValueError:
            raise InvalidOutput(f"{path}: non-integer cluster label") from None
        order = {sid: i for i, sid in enumerate(ids)}
        target_ids = expected.get("sample_ids") or ids
        aligned = [labels[order[sid]] for sid in target_ids]
        try:
            return ClusterLabeling(
                sample_ids=tuple(target_ids),
                labels=np.asarray(aligned),
                k=int(k) if k else max(aligned) + 1,
            )
        except ValueError as exc:
            raise InvalidOutput(f"{path}: {exc}") from None

    if task == "dimension_reduction":
        header, rows = _read_rows(path, None)
        rank = expected.get("rank", len(header) - 1)
        if header != ["sample_id"] + [f"c{i}" for i in range(1, rank + 1)]:
            raise InvalidOutput(
                f"{path}: header {header!r} does not match rank {rank} schema"
            )
        ids = _align_ids(path, [r[0] for r in rows], expected.get("sample_ids"))
        coords = np.array(
            [[_float(path, c, "coordinate") for c in r[1:]] for r in rows]
        )
        if coords.shape[1] != rank:
            raise InvalidOutput(f"{path}: expected {rank} coordinate columns")
        order = {sid: i for i, sid in enumerate(ids)}
        target_ids = expected.get("sample_ids") or ids
        try:
            return Embedding(
                sample_ids=tuple(target_ids),
                coords=coords[[order[sid] for sid in target_ids]],
            )
        except ValueError as exc:
            raise InvalidOutput(f"{path}: {exc}") from None

    raise ValueError(f"unknown runner task {task!r}")


def parse_predictions(path, expected: dict) -> PredictionSet:
    """Parse `sample_id,prediction`; classification labels use the training
    alphabet (class name strings) and are interned back to codes."""
    rows = _read_rows(path, ["sample_id", "prediction"])
    ids = _align_ids(path, [r[0] for r in rows], expected.get("test_ids"))
    order = {sid: i for i, sid in enumerate(ids)}
    target_ids = expected.get("test_ids") or ids
    raw = [rows[order[sid]][1].strip() for sid in target_ids]
    task = expected.get("target_task", "regression")
    if task == "classification":
        class_names = expected.get("class_names")
        if class_names is None:
            raise InvalidOutput(f"{path}: no class alphabet to validate against")
        lookup = {name: i for i, name in enumerate(class_names)}
        try:
            values = [lookup[v] for v in raw]
        except KeyError as exc:
            raise InvalidOutput(
                f"{path}: predicted label {exc.args[0]!r} outside the training alphabet"
            ) from None
        return PredictionSet(
            sample_ids=tuple(target_ids),
            values=np.asarray(values),
            task="classification",
            n_classes=len(class_names),
        )
    values = np.array([_float(path, v, "prediction") for v in raw])
    return PredictionSet(sample_ids=tuple(target_ids), values=values, task="regression")


# -- artifact file writers (shared with the pipeline) -------------------------

def write_interpretation(artifact, path) -> None:
    """Write any artifact in its runner output schema (repr-exact floats)."""
    from .core import artifact_task, fmt_float

    path = Path(path)
    task = artifact_task(artifact)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if task == "feature_importance":
            writer.writerow(["feature_index", "score"])
            for i, s in enumerate(artifact.scores):
                writer.writerow([i, fmt_float(s)])
        elif task == "clustering":
            writer.writerow(["sample_id", "label"])
            for sid, lab in zip(artifact.sample_ids, artifact.labels):
                writer.writerow([sid, int(lab)])
        else:
            writer.writerow(["sample_id"] + [f"c{i}" for i in range(1, artifact.rank + 1)])
            for sid, row in zip(artifact.sample_ids, artifact.coords):
                writer.writerow([sid, *(fmt_float(v) for v in row)])


def write_predictions(preds: PredictionSet, path, class_names=None) -> None:
    from .core import fmt_float

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "prediction"])
        for sid, v in zip(preds.sample_ids, preds.values):
            if preds.task == "classification":
                writer.writerow([sid, class_names[int(v)] if class_names else int(v)])
            else:
                writer.writerow([sid, fmt_float(v)])
