"""Command-line entry points.

    stabx pipeline <config.json>     run everything: perturb -> fit -> score -> report
    stabx perturb <config.json>      materialize perturbation plans only
    stabx score <run_dir>            (re)score a run, optionally overriding metrics
    stabx report <run_dir>           render tables + figures from existing scores
    stabx validate-runner ...        check an external runner against the protocol

Exit codes: 0 success, 1 configuration/usage error, 2 completed with
partial failures, 3 fatal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from ..core import ARTIFACT_TASKS, TabularDataset, save_csv
from ..runner import RunnerManifest, invoke
from .config import ConfigError, load_config

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stabx",
        description="stability analysis of model interpretations under data perturbation",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full pipeline from a config")
    p.add_argument("config", help="pipeline config (JSON)")

    p = sub.add_parser("perturb", help="write perturbation plans without fitting")
    p.add_argument("config", help="pipeline config (JSON)")

    p = sub.add_parser("score", help="score (or re-score) a run directory")
    p.add_argument("run_dir", help="pipeline output directory")
    p.add_argument("--rank-metric", choices=("ao", "jaccard", "kendall"))
    p.add_argument("--k", type=int, help="top-K depth for rank metrics")
    p.add_argument("--kendall-p", type=float, help="penalty for unknowable pairs")
    p.add_argument("--partition-metric", choices=("ari", "fm", "mi", "v"))
    p.add_argument("--nn-metric", choices=("nn_auc", "nn_jaccard"))

    p = sub.add_parser("report", help="render report tables and figures")
    p.add_argument("run_dir", help="pipeline output directory (must be scored)")

    p = sub.add_parser("validate-runner",
                       help="exercise an external runner against the manifest protocol")
    p.add_argument("--command", nargs="+", required=True,
                   help="runner argv; the manifest path is appended")
    p.add_argument("--task", action="append", choices=ARTIFACT_TASKS,
                   help="task(s) to validate (default: all)")
    p.add_argument("--timeout", type=int, default=120,
                   help="per-invocation timeout in seconds")
    p.add_argument("--keep", action="store_true",
                   help="keep the scratch directory for inspection")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "pipeline":
            return _cmd_pipeline(args)
        if args.command == "perturb":
            return _cmd_perturb(args)
        if args.command == "score":
            return _cmd_score(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_validate_runner(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a bug or a broken run dir
        log.exception("fatal: %s", exc)
        return 3


def _cmd_pipeline(args) -> int:
    from .report import build_report
    from .run import run_pipeline
    from .score import score_run

    cfg = load_config(args.config)
    summary = run_pipeline(cfg)
    score_run(summary["run_dir"])
    build_report(summary["run_dir"])
    print(f"report written to {Path(summary['run_dir']) / 'report'}")
    if summary["n_failed"]:
        print(f"warning: {summary['n_failed']} of {summary['n_repeats']} "
              f"repeats failed; affected cells may be missing", file=sys.stderr)
        return 2
    return 0


def _cmd_perturb(args) -> int:
    from .run import build_plans, load_datasets, write_plans

    cfg = load_config(args.config)
    run_dir = Path(cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(cfg.to_json_dict(), sort_keys=True, indent=1)
    )
    plans = build_plans(cfg, load_datasets(cfg))
    write_plans(run_dir, plans)
    for (dataset_id, key), plan in sorted(plans.items()):
        print(f"{dataset_id}-{key}: {plan.kind} x{plan.n_repeats} "
              f"hash={plan.content_hash()[:12]}")
    return 0


def _cmd_score(args) -> int:
    from .score import score_run

    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").exists():
        print(f"error: {run_dir} is not a run directory (no config.json)",
              file=sys.stderr)
        return 1
    score_run(
        run_dir,
        rank_metric=args.rank_metric,
        k=args.k,
        kendall_p=args.kendall_p,
        partition_metric=args.partition_metric,
        nn_metric=args.nn_metric,
    )
    print(f"scores written to {run_dir / 'scores'}")
    return 0


def _cmd_report(args) -> int:
    from .report import build_report

    build_report(args.run_dir)
    print(f"report written to {Path(args.run_dir) / 'report'}")
    return 0


# -- runner validation ------------------------------------------------------------

def _toy_data(rng: np.random.Generator, n: int, supervised: bool) -> TabularDataset:
    p = 6
    X = rng.normal(size=(n, p))
    names = tuple(f"f{j}" for j in range(p))
    ids = tuple(range(n))
    if not supervised:
        return TabularDataset(sample_ids=ids, feature_names=names, features=X,
                              task_kind="unsupervised")
    w = np.zeros(p)
    w[:2] = (2.0, -1.0)
    y = X @ w + 0.1 * rng.normal(size=n)
    return TabularDataset(sample_ids=ids, feature_names=names, features=X,
                          task_kind="regression", target=y)


def _validate_one(command, task: str, scratch: Path, timeout: int) -> list:
    """Run one task twice; return a list of failure strings (empty = pass)."""
    rng = np.random.default_rng(7)
    supervised = task == "feature_importance"
    train = _toy_data(rng, 50, supervised)
    train_path = scratch / f"{task}.train.csv"
    save_csv(train, train_path)
    test_path = None
    if supervised:
        test_path = scratch / f"{task}.test.csv"
        save_csv(_toy_data(rng, 20, True), test_path)

    expected: dict = {}
    if task == "feature_importance":
        expected["n_features"] = train.n_features
    elif task == "clustering":
        expected = {"sample_ids": list(train.sample_ids), "k": 3}
    else:
        expected = {"sample_ids": list(train.sample_ids), "rank": 2}

    outputs = []
    for attempt in (1, 2):
        art_path = scratch / f"{task}.out{attempt}.csv"
        preds_path = scratch / f"{task}.preds{attempt}.csv"
        manifest = RunnerManifest(
            task=task,
            train_path=str(train_path),
            test_path=str(test_path) if test_path else None,
            interpretation_path=str(art_path),
            predictions_path=str(preds_path) if supervised else None,
            target_column="target" if supervised else None,
            target_task="regression" if supervised else None,
            k_clusters=3 if task == "clustering" else None,
            rank=2 if task == "dimension_reduction" else None,
            seed=123,
            timeout_seconds=timeout,
        )
        result = invoke(list(command), manifest,
                        log_path=scratch / f"{task}.{attempt}.log",
                        expected=expected)
        if not result.ok:
            return [f"status {result.status}"
                    + (f": {result.reason}" if result.reason else "")]
        outputs.append((art_path.read_bytes(),
                        preds_path.read_bytes() if supervised else b""))
    if outputs[0] != outputs[1]:
        return ["nondeterministic: same seed produced different output bytes"]
    return []


def _cmd_validate_runner(args) -> int:
    tasks = args.task or list(ARTIFACT_TASKS)
    scratch = Path(tempfile.mkdtemp(prefix="stabx-validate-"))
    failures = 0
    try:
        for task in tasks:
            problems = _validate_one(args.command, task, scratch, args.timeout)
            if problems:
                failures += 1
                print(f"FAIL {task}: {'; '.join(problems)}")
            else:
                print(f"PASS {task}")
    finally:
        if args.keep or failures:
            print(f"scratch directory kept at {scratch}")
        else:
            shutil.rmtree(scratch, ignore_errors=True)
    return 2 if failures else 0
