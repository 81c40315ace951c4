import numpy as np
import pytest

from stabx.core import (
    ClusterLabeling,
    Embedding,
    FeatureRanking,
    ParseError,
    PredictionSet,
    TabularDataset,
    load_csv,
    rank_order,
    save_csv,
    standardize,
)


def toy_dataset(n=4, p=3, task="unsupervised", target=None, class_names=None):
    rng = np.random.default_rng(0)
    return TabularDataset(
        sample_ids=tuple(range(n)),
        feature_names=tuple(f"f{i}" for i in range(p)),
        features=rng.normal(size=(n, p)),
        task_kind=task,
        target=target,
        class_names=class_names,
    )


def test_dataset_validates_shapes():
    with pytest.raises(ValueError, match="at least 2 samples"):
        toy_dataset(n=1)
    with pytest.raises(ValueError, match="unique"):
        TabularDataset(
            sample_ids=(0, 0),
            feature_names=("a",),
            features=np.zeros((2, 1)),
        )
    with pytest.raises(ValueError, match="non-finite"):
        TabularDataset(
            sample_ids=(0, 1),
            feature_names=("a",),
            features=np.array([[0.0], [np.nan]]),
        )


def test_dataset_is_immutable():
    ds = toy_dataset()
    with pytest.raises(ValueError):
        ds.features[0, 0] = 99.0


def test_take_preserves_ids_and_target():
    ds = toy_dataset(n=5, task="regression", target=np.arange(5.0))
    sub = ds.take([4, 1])
    assert sub.sample_ids == (4, 1)
    assert np.array_equal(sub.target, [4.0, 1.0])
    assert np.array_equal(sub.features, ds.features[[4, 1]])


def test_standardize_matches_hand_values():
    # column (1,2,3): sample sd (ddof=1) is 1, so z-scores are (-1, 0, 1)
    ds = TabularDataset(
        sample_ids=(0, 1, 2),
        feature_names=("x", "c"),
        features=np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]),
    )
    z = standardize(ds)
    assert np.allclose(z.features[:, 0], [-1.0, 0.0, 1.0])
    # constant column: centered to zero and reported, not scaled
    assert np.allclose(z.features[:, 1], 0.0)
    assert z.constant_features == (1,)
    assert z.standardized


def test_load_csv_roundtrip(tmp_path):
    ds = toy_dataset(n=6, p=2, task="regression", target=np.linspace(-1, 1, 6))
    path = tmp_path / "toy.csv"
    save_csv(ds, path)
    back = load_csv(path, target="target", task="regression", id_column="sample_id")
    assert back.sample_ids == ds.sample_ids
    assert np.array_equal(back.features, ds.features)  # repr floats roundtrip exactly
    assert np.array_equal(back.target, ds.target)


def test_load_csv_interns_class_labels(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("x,y\n1.0,cat\n2.0,dog\n3.0,cat\n")
    ds = load_csv(path, target="y", task="classification")
    assert ds.class_names == ("cat", "dog")  # first-appearance order
    assert np.array_equal(ds.target, [0, 1, 0])


def test_load_csv_rejects_missing_rows_with_count(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,2\n,3\n4,nan\n5,6\n")
    with pytest.raises(ParseError, match="2 rows with missing"):
        load_csv(path)


def test_load_csv_names_bad_cell_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(ParseError, match="bad.csv:3.*'b'"):
        load_csv(path)


def test_load_csv_empty_and_headerless(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(ParseError, match="empty"):
        load_csv(empty)
    only_header = tmp_path / "h.csv"
    only_header.write_text("a,b\n")
    with pytest.raises(ParseError, match="no data rows"):
        load_csv(only_header)


def test_rank_order_tie_break():
    # descending score, ties to the lower feature index
    assert rank_order(np.array([0.5, 0.9, 0.5])).tolist() == [1, 0, 2]
    assert rank_order(np.zeros(3)).tolist() == [0, 1, 2]


def test_feature_ranking_from_scores():
    r = FeatureRanking.from_scores([0.1, 0.9, 0.1])
    assert r.order.tolist() == [1, 0, 2]
    assert r.top(2).tolist() == [1, 0]
    with pytest.raises(ValueError, match="finite"):
        FeatureRanking.from_scores([np.inf, 0.0])
    with pytest.raises(ValueError, match="inconsistent"):
        FeatureRanking(scores=np.array([1.0, 2.0]), order=np.array([0, 1]))


def test_cluster_labeling_bounds():
    with pytest.raises(ValueError, match=r"\[0, 2\)"):
        ClusterLabeling(sample_ids=(0, 1), labels=np.array([0, 2]), k=2)
    lab = ClusterLabeling(sample_ids=("a", "b", "c"), labels=np.array([0, 1, 0]), k=2)
    sub = lab.restrict(["c", "a"])
    assert sub.sample_ids == ("c", "a")
    assert sub.labels.tolist() == [0, 0]


def test_embedding_restrict_and_validation():
    e = Embedding(sample_ids=(0, 1, 2), coords=np.arange(6.0).reshape(3, 2))
    sub = e.restrict([2, 0])
    assert np.array_equal(sub.coords, [[4.0, 5.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="finite"):
        Embedding(sample_ids=(0, 1), coords=np.array([[0.0], [np.inf]]))


def test_prediction_set_alphabet_check():
    with pytest.raises(ValueError, match="alphabet"):
        PredictionSet(sample_ids=(0, 1), values=np.array([0, 3]), task="classification", n_classes=2)
    p = PredictionSet(sample_ids=(0, 1), values=np.array([0.5, 1.5]), task="regression")
    assert p.restrict([1]).values.tolist() == [1.5]
