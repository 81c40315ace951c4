"""Reading and validating harness manifests.

A manifest is a single JSON object; version 1 is the only dialect this
runner speaks, and anything else must be rejected before any output file
is touched.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

SUPPORTED_VERSION = 1
TASKS = ("feature_importance", "clustering", "dimension_reduction")


class ManifestError(ValueError):
    """Raised when a manifest is unreadable, unversioned, or inconsistent."""


@dataclass(frozen=True)
class ManifestView:
    """Validated view of one manifest file."""

    task: str
    train_path: str
    interpretation_path: str
    seed: int
    test_path: Optional[str] = None
    predictions_path: Optional[str] = None
    target_column: Optional[str] = None
    target_task: Optional[str] = None
    k_clusters: Optional[int] = None
    rank: Optional[int] = None
    params: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "ManifestView":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ManifestError(f"cannot read manifest: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise ManifestError("manifest must be a JSON object")

        version = payload.get("version")
        if version != SUPPORTED_VERSION:
            raise ManifestError(
                f"unsupported manifest version {version!r} "
                f"(this runner speaks version {SUPPORTED_VERSION})"
            )
        task = payload.get("task")
        if task not in TASKS:
            raise ManifestError(f"unknown task {task!r}")
        for key in ("train_path", "seed"):
            if key not in payload:
                raise ManifestError(f"manifest lacks required field {key!r}")
        outputs = payload.get("output_paths")
        if not isinstance(outputs, dict) or "interpretation" not in outputs:
            raise ManifestError("manifest lacks output_paths.interpretation")

        k_clusters = payload.get("k_clusters")
        rank = payload.get("rank")
        if task == "clustering" and not k_clusters:
            raise ManifestError("clustering manifests require k_clusters")
        if task == "dimension_reduction" and not rank:
            raise ManifestError("dimension_reduction manifests require rank")

        return cls(
            task=task,
            train_path=payload["train_path"],
            interpretation_path=outputs["interpretation"],
            predictions_path=outputs.get("predictions"),
            seed=int(payload["seed"]),
            test_path=payload.get("test_path"),
            target_column=payload.get("target_column"),
            target_task=payload.get("target_task"),
            k_clusters=int(k_clusters) if k_clusters else None,
            rank=int(rank) if rank else None,
            params=payload.get("params") or {},
        )
