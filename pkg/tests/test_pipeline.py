import csv
import hashlib
import json
import textwrap
from pathlib import Path

import numpy as np
import pytest

from stabx.core import FeatureRanking
from stabx.pipeline import ConfigError, load_config
from stabx.pipeline.cli import main as cli_main
from stabx.pipeline.config import MetricsConfig, from_json_dict
from stabx.pipeline.report import competition_ranks
from stabx.pipeline.score import _rank_sweep_values


def write_regression_csv(path, n=60, p=8, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    w = np.zeros(p)
    w[:3] = (3.0, -2.0, 1.5)
    y = X @ w + 0.2 * rng.normal(size=n)
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["id"] + [f"x{j}" for j in range(p)] + ["y"])
        for i in range(n):
            wtr.writerow([i, *(repr(float(v)) for v in X[i]), repr(float(y[i]))])


def write_blobs_csv(path, n=75, seed=1):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0, 0], [6, 6, 0, 0], [0, 6, 6, 0]], dtype=float)
    lab = rng.integers(0, 3, size=n)
    Z = centers[lab] + 0.4 * rng.normal(size=(n, 4))
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["id"] + [f"g{j}" for j in range(4)] + ["truth"])
        for i in range(n):
            wtr.writerow([i, *(repr(float(v)) for v in Z[i]), f"c{lab[i]}"])


def write_config(path, doc):
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def tree_digest(root):
    """sha256 over every file's relative path + bytes, order-independent."""
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- config validation -------------------------------------------------------

def test_config_collects_all_errors(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "out",
        "perturbation": {"kind": "subsample", "repeats": 5},
        "datasets": [
            {"id": "a", "path": "nope.csv", "task": "regression", "target": "y"},
        ],
        "methods": [
            {"id": "m1", "kind": "builtin", "name": "gradient_boost"},
            {"id": "m2", "kind": "runner", "task": "clustering",
             "command": ["/no/such/runner"]},
            {"id": "m3", "kind": "builtin", "name": "permutation"},
        ],
        "metrics": {"rank": {"metric": "spearman"}},
        "bogus_key": 1,
    })
    with pytest.raises(ConfigError) as exc:
        load_config(cfg)
    text = str(exc.value)
    assert "dataset file not found" in text
    assert "unknown builtin 'gradient_boost'" in text
    assert "runner binary not found" in text
    assert "metric must be one of" in text
    assert "permutation importance needs held-out data" in text
    assert "unknown keys ['bogus_key']" in text
    assert len(exc.value.errors) >= 6


def test_config_perturbation_task_rules(tmp_path):
    write_regression_csv(tmp_path / "reg.csv")
    write_blobs_csv(tmp_path / "blobs.csv")
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "out",
        "perturbation": {"kind": "noise", "repeats": 5},
        "datasets": [
            {"id": "reg", "path": "reg.csv", "task": "regression", "target": "y"},
        ],
        "methods": [{"id": "ridge", "kind": "builtin", "name": "ridge"}],
    })
    with pytest.raises(ConfigError, match="noise perturbation applies to unsupervised"):
        load_config(cfg)
    cfg = write_config(tmp_path / "cfg2.json", {
        "output_dir": "out",
        "perturbation": {"kind": "split", "repeats": 5},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth"}],
        "methods": [{"id": "km", "kind": "builtin", "name": "kmeans"}],
    })
    with pytest.raises(ConfigError, match="split perturbation needs a supervised"):
        load_config(cfg)


def test_config_method_matching_no_dataset_is_an_error(tmp_path):
    write_blobs_csv(tmp_path / "blobs.csv")
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "out",
        "perturbation": {"kind": "subsample", "repeats": 5},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth"}],
        "methods": [{"id": "ridge", "kind": "builtin", "name": "ridge"}],
    })
    with pytest.raises(ConfigError, match="matches no configured dataset"):
        load_config(cfg)


def test_config_rank_bounds_against_header(tmp_path):
    write_blobs_csv(tmp_path / "blobs.csv")  # 4 features
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "out",
        "perturbation": {"kind": "subsample", "repeats": 5},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth",
                      "id_column": "id", "rank": 9}],
        "methods": [{"id": "pca", "kind": "builtin", "name": "pca"}],
    })
    with pytest.raises(ConfigError, match="rank 9 exceeds the 4 features"):
        load_config(cfg)
    # the default sweep adapts instead of failing
    cfg = write_config(tmp_path / "cfg2.json", {
        "output_dir": "out",
        "perturbation": {"kind": "subsample", "repeats": 5},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth",
                      "id_column": "id"}],
        "methods": [{"id": "pca", "kind": "builtin", "name": "pca"}],
    })
    assert load_config(cfg).datasets[0].rank_sweep == (2,)


def test_config_roundtrips_through_normalized_form(tmp_path):
    write_regression_csv(tmp_path / "reg.csv")
    cfg = load_config(write_config(tmp_path / "cfg.json", {
        "output_dir": "out",
        "seed": 7,
        "perturbation": {"kind": "split", "repeats": 12, "ratio": 0.8},
        "datasets": [{"id": "reg", "path": "reg.csv", "task": "regression",
                      "target": "y", "id_column": "id"}],
        "methods": [{"id": "ridge", "kind": "builtin", "name": "ridge",
                     "params": {"folds": 3}}],
        "metrics": {"rank": {"metric": "jaccard", "k": 5}},
    }))
    assert from_json_dict(cfg.to_json_dict()) == cfg
    assert cfg.metrics.rank_metric == "jaccard"
    assert cfg.metrics.k == 5
    assert cfg.perturbation.ratio == 0.8


# -- a small but complete run, shared across assertions ------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    write_regression_csv(root / "reg.csv")
    write_blobs_csv(root / "blobs.csv")
    cfg_path = write_config(root / "cfg.json", {
        "output_dir": "run",
        "seed": 11,
        "workers": 2,
        "figures": False,
        "perturbation": {"kind": "subsample", "repeats": 5, "fraction": 0.7},
        "datasets": [
            {"id": "reg", "path": "reg.csv", "task": "regression",
             "target": "y", "id_column": "id", "k_clusters": 3},
            {"id": "blobs", "path": "blobs.csv", "true_labels": "truth",
             "id_column": "id"},
        ],
        "methods": [
            {"id": "ridge", "kind": "builtin", "name": "ridge"},
            {"id": "lasso", "kind": "builtin", "name": "lasso"},
            {"id": "km", "kind": "builtin", "name": "kmeans"},
            {"id": "pca", "kind": "builtin", "name": "pca"},
        ],
    })
    code = cli_main(["pipeline", str(cfg_path)])
    assert code == 0
    return root / "run", cfg_path


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_pipeline_within_tables_cover_compatible_cells(small_run):
    run_dir, _ = small_run
    fi = read_table(run_dir / "scores" / "within_feature_importance.csv")
    assert {(r["dataset"], r["method"]) for r in fi} == {("reg", "ridge"),
                                                         ("reg", "lasso")}
    assert all(0.0 <= float(r["value"]) <= 1.0 for r in fi)
    assert all(r["metric"] == "ao" and r["n_pairs"] == "10" for r in fi)

    clu = read_table(run_dir / "scores" / "within_clustering.csv")
    assert {(r["dataset"], r["method"]) for r in clu} == {("reg", "km"),
                                                          ("blobs", "km")}
    dr = read_table(run_dir / "scores" / "within_dimension_reduction.csv")
    assert {(r["dataset"], r["method"]) for r in dr} == {("reg", "pca"),
                                                         ("blobs", "pca")}


def test_pipeline_between_rows_align_repeats(small_run):
    run_dir, _ = small_run
    rows = read_table(run_dir / "scores" / "between_feature_importance.csv")
    assert len(rows) == 1
    row = rows[0]
    assert (row["method_a"], row["method_b"]) == ("ridge", "lasso")
    assert row["n_repeats"] == "5" and row["n_pairs"] == "5"
    assert 0.0 <= float(row["value"]) <= 1.0


def test_pipeline_accuracy_only_where_truth_exists(small_run):
    run_dir, _ = small_run
    acc = read_table(run_dir / "scores" / "accuracy_clustering.csv")
    assert {(r["dataset"], r["method"]) for r in acc} == {("blobs", "km")}
    assert float(acc[0]["value"]) > 0.7  # clean blobs, modulo local optima
    # subsampling has no held-out part, so no prediction-based tables
    assert not (run_dir / "scores" / "accuracy_feature_importance.csv").exists()
    assert not (run_dir / "scores" / "prediction_within.csv").exists()


def test_pipeline_report_orders_datasets_by_np_ratio(small_run):
    run_dir, _ = small_run
    # reg: 60/8 = 7.5, blobs: 75/4 = 18.75 -> reg first
    rows = read_table(run_dir / "report" / "within_clustering.csv")
    assert list(rows[0])[:3] == ["method", "reg", "blobs"]
    index = json.loads((run_dir / "report" / "index.json").read_text())
    assert index["dataset_order"] == ["reg", "blobs"]


def test_pipeline_report_hashes_its_own_files(small_run):
    run_dir, _ = small_run
    index = json.loads((run_dir / "report" / "index.json").read_text())
    for rel, digest in index["files"].items():
        blob = (run_dir / "report" / rel).read_bytes()
        assert hashlib.sha256(blob).hexdigest() == digest


def test_pipeline_sidecars_record_ok_status(small_run):
    run_dir, _ = small_run
    sidecar = json.loads(
        (run_dir / "artifacts" / "reg" / "ridge" / "base" / "0.json").read_text()
    )
    assert sidecar["status"] == "ok"
    assert "skip_key" in sidecar and "seed" in sidecar


def test_rescoring_with_overrides_changes_only_metrics(small_run):
    run_dir, _ = small_run
    before = tree_digest(run_dir / "artifacts")
    code = cli_main(["score", str(run_dir), "--rank-metric", "jaccard",
                     "--k", "5", "--partition-metric", "fm"])
    assert code == 0
    fi = read_table(run_dir / "scores" / "within_feature_importance.csv")
    assert all(r["metric"] == "jaccard" for r in fi)
    clu = read_table(run_dir / "scores" / "within_clustering.csv")
    assert all(r["metric"] == "fm" for r in clu)
    assert tree_digest(run_dir / "artifacts") == before  # no re-fitting
    # restore the original scoring for any later assertions
    assert cli_main(["score", str(run_dir)]) == 0


def test_rerun_reuses_artifacts_and_reproduces_bytes(small_run):
    run_dir, cfg_path = small_run
    scores_before = tree_digest(run_dir / "scores")
    report_before = tree_digest(run_dir / "report")
    mtime = (run_dir / "artifacts" / "reg" / "ridge" / "base" / "0.csv").stat().st_mtime_ns
    assert cli_main(["pipeline", str(cfg_path)]) == 0
    assert (run_dir / "artifacts" / "reg" / "ridge" / "base" / "0.csv").stat().st_mtime_ns == mtime
    assert tree_digest(run_dir / "scores") == scores_before
    assert tree_digest(run_dir / "report") == report_before


def test_worker_count_does_not_change_report_bytes(tmp_path):
    write_regression_csv(tmp_path / "reg.csv", n=40, p=6)
    digests = []
    for workers in (1, 8):
        doc = {
            "output_dir": f"run_w{workers}",
            "seed": 2,
            "workers": workers,
            "perturbation": {"kind": "split", "repeats": 4, "ratio": 0.7},
            "datasets": [{"id": "reg", "path": "reg.csv", "task": "regression",
                          "target": "y", "id_column": "id"}],
            "methods": [
                {"id": "ridge", "kind": "builtin", "name": "ridge"},
                {"id": "lasso", "kind": "builtin", "name": "lasso"},
            ],
        }
        cfg = write_config(tmp_path / f"cfg_w{workers}.json", doc)
        assert cli_main(["pipeline", str(cfg)]) == 0
        digests.append(tree_digest(tmp_path / f"run_w{workers}" / "report"))
    assert digests[0] == digests[1]


# -- ranks and sweeps -----------------------------------------------------------

def test_competition_ranks_tie_semantics():
    assert competition_ranks([0.9, 0.5, 0.5]) == [1, 2, 2]
    assert competition_ranks([0.9, 0.5, 0.5, 0.3]) == [1, 2, 2, 4]
    assert competition_ranks([0.5, None, 0.9]) == [2, None, 1]
    assert competition_ranks([]) == []


def test_rank_sweep_anchor_identical_rankings():
    arts = [FeatureRanking.from_scores(np.array([5.0, 4.0, 3.0, 2.0, 1.0]))
            for _ in range(3)]
    for metric in ("ao", "jaccard", "kendall"):
        m = MetricsConfig(rank_metric=metric)
        values = _rank_sweep_values(arts, [1, 2, 3, 5], m)
        assert [k for k, _ in values] == [1, 2, 3, 5]
        assert all(v == 1.0 for _, v in values)


def test_rank_sweep_profile_matches_direct_metrics():
    rng = np.random.default_rng(4)
    arts = [FeatureRanking.from_scores(rng.normal(size=12)) for _ in range(4)]
    from stabx.rankmetrics import average_overlap, jaccard_at_k

    values = dict(_rank_sweep_values(arts, [1, 3, 7, 12],
                                     MetricsConfig(rank_metric="ao")))
    pairs = [(a, b) for i, a in enumerate(arts) for b in arts[i + 1:]]
    for k, got in values.items():
        want = np.mean([average_overlap(a, b, k) for a, b in pairs])
        assert got == pytest.approx(want, abs=1e-12)
    values = dict(_rank_sweep_values(arts, [1, 3, 7, 12],
                                     MetricsConfig(rank_metric="jaccard")))
    for k, got in values.items():
        want = np.mean([jaccard_at_k(a, b, k) for a, b in pairs])
        assert got == pytest.approx(want, abs=1e-12)


def test_sigma_zero_anchors_deterministic_methods_at_one(tmp_path):
    write_blobs_csv(tmp_path / "blobs.csv", n=40)
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "run",
        "figures": False,
        "perturbation": {"kind": "noise", "repeats": 4,
                         "sigmas": [0.0, 0.8]},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth",
                      "id_column": "id", "rank_sweep": []}],
        "methods": [
            {"id": "hc", "kind": "builtin", "name": "hierarchical"},
            {"id": "pca", "kind": "builtin", "name": "pca"},
        ],
    })
    assert cli_main(["pipeline", str(cfg)]) == 0
    rows = read_table(tmp_path / "run" / "scores" / "sweep_sigma.csv")
    at_zero = [r for r in rows if float(r["sigma"]) == 0.0]
    assert len(at_zero) == 2
    assert all(float(r["value"]) == 1.0 for r in at_zero)
    noisy = [r for r in rows if float(r["sigma"]) == 0.8]
    assert all(float(r["value"]) <= 1.0 for r in noisy)
    # sigma=0 is also the headline column
    within = read_table(tmp_path / "run" / "scores" / "within_clustering.csv")
    assert float(within[0]["value"]) == 1.0


# -- failure handling --------------------------------------------------------------

FLAKY_RUNNER = textwrap.dedent("""\
    import csv, json, sys
    manifest = json.load(open(sys.argv[1]))
    out = manifest["output_paths"]["interpretation"]
    repeat = int(out.rsplit("/", 1)[1].split(".")[0])
    if repeat < 3:
        sys.exit(9)
    with open(manifest["train_path"], newline="") as fh:
        ids = [row[0] for row in csv.reader(fh)][1:]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label"])
        for i, sid in enumerate(ids):
            w.writerow([sid, i % manifest["k_clusters"]])
""")


def test_majority_repeat_failures_blank_the_cell(tmp_path):
    write_blobs_csv(tmp_path / "blobs.csv", n=30)
    runner = tmp_path / "flaky.py"
    runner.write_text(FLAKY_RUNNER)
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "run",
        "figures": False,
        "perturbation": {"kind": "subsample", "repeats": 4, "fraction": 0.8},
        "datasets": [{"id": "blobs", "path": "blobs.csv", "true_labels": "truth",
                      "id_column": "id"}],
        "methods": [
            {"id": "km", "kind": "builtin", "name": "kmeans"},
            {"id": "flaky", "kind": "runner", "task": "clustering",
             "command": ["python3", str(runner)]},
        ],
    })
    assert cli_main(["pipeline", str(cfg)]) == 2  # partial failures
    rows = read_table(tmp_path / "run" / "scores" / "within_clustering.csv")
    by_method = {r["method"]: r for r in rows}
    assert by_method["flaky"]["value"] == ""  # 3 of 4 repeats crashed
    assert by_method["km"]["value"] != ""
    tables = json.loads((tmp_path / "run" / "scores" / "tables.json").read_text())
    status = next(c for c in tables["cell_status"] if c["method"] == "flaky")
    assert status["n_failed"] == 3 and status["statuses"]["crash"] == 3


# -- runner validation CLI ------------------------------------------------------------

GOOD_RUNNER = textwrap.dedent("""\
    import csv, json, sys
    import numpy as np
    manifest = json.load(open(sys.argv[1]))
    task = manifest["task"]
    with open(manifest["train_path"], newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    feat = [j for j, c in enumerate(header)
            if c not in ("sample_id", manifest.get("target_column"))]
    ids = [r[0] for r in body]
    X = np.array([[float(r[j]) for j in feat] for r in body])
    rng = np.random.default_rng(manifest["seed"])
    with open(manifest["output_paths"]["interpretation"], "w", newline="") as fh:
        w = csv.writer(fh)
        if task == "feature_importance":
            w.writerow(["feature_index", "score"])
            for j, s in enumerate(np.abs(X).mean(axis=0) + rng.random(len(feat))):
                w.writerow([j, repr(float(s))])
        elif task == "clustering":
            w.writerow(["sample_id", "label"])
            for i, sid in enumerate(ids):
                w.writerow([sid, i % manifest["k_clusters"]])
        else:
            r = manifest["rank"]
            w.writerow(["sample_id"] + [f"c{j + 1}" for j in range(r)])
            for sid, row in zip(ids, X[:, :r]):
                w.writerow([sid] + [repr(float(v)) for v in row])
    pred_path = manifest["output_paths"].get("predictions")
    if pred_path:
        with open(manifest["test_path"], newline="") as fh:
            test_ids = [row[0] for row in csv.reader(fh)][1:]
        with open(pred_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "prediction"])
            for sid in test_ids:
                w.writerow([sid, "0.0"])
""")

NONDETERMINISTIC_RUNNER = textwrap.dedent("""\
    import csv, json, os, sys
    manifest = json.load(open(sys.argv[1]))
    with open(manifest["train_path"], newline="") as fh:
        ids = [row[0] for row in csv.reader(fh)][1:]
    with open(manifest["output_paths"]["interpretation"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label"])
        for sid in ids:
            w.writerow([sid, int.from_bytes(os.urandom(2), "big") % 3])
""")


def test_validate_runner_passes_conforming_runner(tmp_path, capsys):
    runner = tmp_path / "good.py"
    runner.write_text(GOOD_RUNNER)
    code = cli_main(["validate-runner", "--command", "python3", str(runner)])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("PASS") == 3


def test_validate_runner_flags_nondeterminism(tmp_path, capsys):
    runner = tmp_path / "bad.py"
    runner.write_text(NONDETERMINISTIC_RUNNER)
    code = cli_main(["validate-runner", "--command", "python3", str(runner),
                     "--task", "clustering"])
    out = capsys.readouterr().out
    assert code == 2
    assert "FAIL clustering" in out and "nondeterministic" in out


def test_perturb_subcommand_writes_plans_only(tmp_path, capsys):
    write_regression_csv(tmp_path / "reg.csv")
    cfg = write_config(tmp_path / "cfg.json", {
        "output_dir": "run",
        "perturbation": {"kind": "split", "repeats": 6},
        "datasets": [{"id": "reg", "path": "reg.csv", "task": "regression",
                      "target": "y", "id_column": "id"}],
        "methods": [{"id": "ridge", "kind": "builtin", "name": "ridge"}],
    })
    assert cli_main(["perturb", str(cfg)]) == 0
    assert (tmp_path / "run" / "plans" / "reg-base.json").exists()
    assert not (tmp_path / "run" / "artifacts").exists()
    assert "reg-base: split x6" in capsys.readouterr().out


def test_score_rejects_non_run_directory(tmp_path, capsys):
    assert cli_main(["score", str(tmp_path)]) == 1
    assert "config.json" in capsys.readouterr().err


def test_config_error_exits_one(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", {"output_dir": "out"})
    assert cli_main(["pipeline", str(cfg)]) == 1
    assert "invalid config" in capsys.readouterr().err
