"""Command-line entry point.

Usage: stabx-pyrunner <manifest.json> (the harness appends the manifest
path to the configured argv). Exit 0 on success; any failure — including
an unsupported manifest version — exits nonzero with one line on stderr
and leaves no output files behind.
"""
from __future__ import annotations

import sys
from typing import Optional, Sequence

from . import methods, tables
from .manifest import ManifestView


def run(view: ManifestView) -> None:
    ids, X, y = tables.load_table(view.train_path, view.target_column)

    if view.task == "feature_importance":
        if y is None:
            raise ValueError("feature_importance manifests need a target column")
        model, scores = methods.boosted_importance(X, y, view.target_task, view.seed)
        tables.write_importance(view.interpretation_path, scores)
        if view.predictions_path and view.test_path:
            test_ids, X_test, _ = tables.load_table(view.test_path, view.target_column)
            tables.write_predictions(view.predictions_path, test_ids,
                                     model.predict(X_test), view.target_task)
    elif view.task == "clustering":
        labels = methods.mixture_labels(X, view.k_clusters, view.seed)
        tables.write_labels(view.interpretation_path, ids, labels)
    else:
        coords = methods.tsne_coords(X, view.rank, view.seed)
        tables.write_coords(view.interpretation_path, ids, coords)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if len(argv) != 1:
        print("usage: stabx-pyrunner <manifest.json>", file=sys.stderr)
        return 2
    try:
        run(ManifestView.load(argv[0]))
    except Exception as exc:  # noqa: BLE001 - protocol: any failure is a nonzero exit
        print(f"pyrunner: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    raise SystemExit(main())
