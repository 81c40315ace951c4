import numpy as np
import pytest

from stabx.core import TabularDataset
from stabx.learners.cluster import hierarchical, kmeans, minibatch_kmeans, spectral_cluster
from stabx.partmetrics import ari


def blobs(n=60, centers=((0, 0), (10, 10), (-10, 10)), sd=0.1, seed=0):
    rng = np.random.default_rng(seed)
    k = len(centers)
    per = n // k
    X, truth = [], []
    for c, center in enumerate(centers):
        X.append(rng.normal(loc=center, scale=sd, size=(per, len(center))))
        truth += [c] * per
    return np.vstack(X), np.array(truth)


# -- brute-force agglomerative oracle -------------------------------------------

def agglomerate_oracle(D, k, linkage):
    """O(N^3) agglomeration on an explicit cluster list; returns labels."""
    n = D.shape[0]
    clusters = [[i] for i in range(n)]

    def cluster_dist(a, b):
        vals = [D[i, j] for i in a for j in b]
        if linkage == "single":
            return min(vals)
        if linkage == "complete":
            return max(vals)
        if linkage == "average":
            return sum(vals) / len(vals)
        raise ValueError(linkage)

    while len(clusters) > k:
        best = None
        for ai in range(len(clusters)):
            for bi in range(ai + 1, len(clusters)):
                d = cluster_dist(clusters[ai], clusters[bi])
                if best is None or d < best[0]:
                    best = (d, ai, bi)
        _, ai, bi = best
        clusters[ai] = clusters[ai] + clusters[bi]
        del clusters[bi]
    labels = np.empty(n, dtype=int)
    for idx, members in enumerate(sorted(clusters, key=min)):
        labels[sorted(members)] = idx
    return labels


# -- kmeans ----------------------------------------------------------------------

def test_kmeans_recovers_separated_blobs():
    X, truth = blobs()
    for init in ("random", "kmeanspp"):
        lab = kmeans(X, 3, init=init, seed=0)
        assert ari(lab.labels, truth) == 1.0


def test_kmeans_boundary_cases():
    X, _ = blobs(n=12)
    every = kmeans(X, 12, seed=1)
    assert sorted(every.labels.tolist()) == list(range(12))  # singletons
    one = kmeans(X, 1, seed=1)
    assert np.all(one.labels == 0)


def test_kmeans_is_seeded_and_pure():
    X, _ = blobs(sd=3.0)
    a = kmeans(X, 3, seed=5)
    b = kmeans(X, 3, seed=5)
    assert np.array_equal(a.labels, b.labels)


def test_kmeans_inertia_non_increasing():
    X, _ = blobs(n=90, sd=4.0, seed=3)
    rng = np.random.default_rng(0)
    centroids = X[rng.permutation(len(X))[:3]].copy()
    inertias = []
    labels = None
    for _ in range(15):
        d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertias.append(d2[np.arange(len(X)), labels].sum())
        for c in range(3):
            if np.any(labels == c):
                centroids[c] = X[labels == c].mean(axis=0)
    assert all(a >= b - 1e-9 for a, b in zip(inertias, inertias[1:]))


def test_kmeans_accepts_dataset_and_keeps_ids():
    X, _ = blobs(n=12)
    ds = TabularDataset(
        sample_ids=tuple(f"s{i}" for i in range(12)),
        feature_names=("x", "y"),
        features=X,
    )
    lab = kmeans(ds, 3, seed=0)
    assert lab.sample_ids == ds.sample_ids


def test_kmeans_k_bounds():
    X, _ = blobs(n=12)
    with pytest.raises(ValueError, match=r"\[1, N\]"):
        kmeans(X, 13)


# -- minibatch ---------------------------------------------------------------------

def test_minibatch_full_batch_reproduces_lloyd():
    X, _ = blobs(n=90, sd=2.5, seed=4)
    init = X[[5, 40, 70]].copy()
    full = kmeans(X, 3, initial_centroids=init, max_iter=100, seed=0)
    mb = minibatch_kmeans(X, 3, batch_size=len(X), initial_centroids=init,
                          max_iter=100, seed=0)
    assert np.array_equal(full.labels, mb.labels)


def test_minibatch_recovers_blobs_and_is_seeded():
    X, truth = blobs()
    lab = minibatch_kmeans(X, 3, batch_size=20, seed=2)
    assert ari(lab.labels, truth) == 1.0
    again = minibatch_kmeans(X, 3, batch_size=20, seed=2)
    assert np.array_equal(lab.labels, again.labels)


# -- hierarchical -------------------------------------------------------------------

def test_hierarchical_single_linkage_example():
    X = np.array([[0.0], [1.0], [10.0]])
    lab = hierarchical(X, 2, linkage="single", distance="euclidean")
    assert lab.labels.tolist() == [0, 0, 1]


def test_hierarchical_k_equals_n():
    X = np.array([[0.0], [1.0], [10.0]])
    lab = hierarchical(X, 3, linkage="complete", distance="euclidean")
    assert sorted(lab.labels.tolist()) == [0, 1, 2]


def test_single_linkage_splits_at_largest_gap():
    # 1-d single linkage at K=2 must cut the largest adjacent gap (4.5 -> 9.0)
    xs = np.array([0.0, 1.0, 2.5, 4.5, 9.0, 10.2, 11.6]).reshape(-1, 1)
    lab = hierarchical(xs, 2, linkage="single", distance="euclidean")
    assert lab.labels.tolist() == [0, 0, 0, 0, 1, 1, 1]


def test_chaining_separates_single_from_complete():
    xs = np.array([0.0, 1.0, 2.1, 3.3, 4.6, 6.0]).reshape(-1, 1)
    sing = hierarchical(xs, 2, linkage="single", distance="euclidean")
    comp = hierarchical(xs, 2, linkage="complete", distance="euclidean")
    assert sing.labels.tolist() == [0, 0, 0, 0, 0, 1]  # chains left to right
    assert comp.labels.tolist() == [0, 0, 0, 0, 1, 1]  # balances diameters


def test_hierarchical_matches_bruteforce_oracle():
    rng = np.random.default_rng(6)
    from stabx.distances import pairwise

    for linkage in ("single", "complete", "average"):
        for metric in ("euclidean", "manhattan", "cosine"):
            X = rng.normal(size=(18, 3))
            got = hierarchical(X, 3, linkage=linkage, distance=metric)
            ref = agglomerate_oracle(pairwise(X, metric=metric), 3, linkage)
            assert np.array_equal(got.labels, ref), (linkage, metric)


def test_ward_recovers_blobs_and_requires_euclidean():
    X, truth = blobs()
    lab = hierarchical(X, 3, linkage="ward", distance="euclidean")
    assert ari(lab.labels, truth) == 1.0
    with pytest.raises(ValueError, match="ward"):
        hierarchical(X, 3, linkage="ward", distance="manhattan")


def test_hierarchical_all_distances_on_blobs():
    X, truth = blobs(sd=0.05)
    X = np.abs(X) + 1.0  # keep canberra away from the origin
    for metric in ("euclidean", "manhattan", "chebyshev", "cosine", "canberra"):
        lab = hierarchical(X, 3, linkage="average", distance=metric)
        assert lab.k == 3


# -- spectral -----------------------------------------------------------------------

def test_spectral_disconnected_cliques():
    X, truth = blobs(n=30, centers=((0, 0), (100, 100)), sd=0.01, seed=7)
    lab = spectral_cluster(X, 2, affinity="knn", n_neighbors=6, seed=0)
    assert ari(lab.labels, truth) == 1.0


def test_spectral_rbf_blobs():
    X, truth = blobs(n=45, sd=0.2, seed=8)
    lab = spectral_cluster(X, 3, affinity="rbf", gamma=0.5, seed=0)
    assert ari(lab.labels, truth) == 1.0


def test_spectral_too_many_components_errors():
    X, _ = blobs(n=30, centers=((0, 0), (50, 50), (-50, 50)), sd=0.01, seed=9)
    with pytest.raises(ValueError, match="components"):
        spectral_cluster(X, 2, affinity="knn", n_neighbors=3, seed=0)


def test_spectral_k1_single_cluster():
    X, _ = blobs(n=20, centers=((0, 0),), sd=1.0)
    lab = spectral_cluster(X, 1, affinity="rbf", seed=0)
    assert np.all(lab.labels == 0)
