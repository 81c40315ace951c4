import json

import numpy as np
import pytest

from stabx.core import TabularDataset
from stabx.perturb import (
    PerturbationPlan,
    apply_noise,
    derive_seed,
    make_noise_plan,
    make_splits,
    make_subsamples,
    realize,
    sample_without_replacement,
    sigma_sweep,
)


def dataset(n=10, p=3, task="unsupervised", target=None, class_names=None):
    rng = np.random.default_rng(7)
    return TabularDataset(
        sample_ids=tuple(range(n)),
        feature_names=tuple(f"f{i}" for i in range(p)),
        features=rng.normal(size=(n, p)),
        task_kind=task,
        target=target,
        class_names=class_names,
    )


def test_split_sizes_round_half_up():
    plan = make_splits(10, ratio=0.7, repeats=3, seed=1)
    for rep in plan.repeats:
        assert len(rep.train) == 7
        assert len(rep.test) == 3
        assert sorted(rep.train + rep.test) == list(range(10))
    # 0.75 of 10 -> 7.5 rounds half up to 8
    plan = make_splits(10, ratio=0.75, repeats=1, seed=1)
    assert len(plan.repeats[0].train) == 8


def test_split_is_deterministic_per_seed():
    a = make_splits(50, ratio=0.7, repeats=5, seed=42)
    b = make_splits(50, ratio=0.7, repeats=5, seed=42)
    assert a.to_json() == b.to_json()
    c = make_splits(50, ratio=0.7, repeats=5, seed=43)
    assert a.to_json() != c.to_json()


def test_repeat_seeds_are_splittable_not_sequential():
    seeds = [derive_seed(0, i) for i in range(10)]
    assert len(set(seeds)) == 10
    assert derive_seed(0, 3) == derive_seed(0, 3)
    assert derive_seed(0, 3) != derive_seed(1, 3)
    # repeat k's data does not depend on how many repeats precede it
    a = make_splits(20, ratio=0.5, repeats=10, seed=9)
    b = make_splits(20, ratio=0.5, repeats=3, seed=9)
    assert a.repeats[2].train == b.repeats[2].train


def test_sample_without_replacement_is_uniformish():
    rng = np.random.default_rng(0)
    counts = np.zeros(6)
    for _ in range(3000):
        counts[sample_without_replacement(rng, 6, 3)] += 1
    assert counts.sum() == 9000
    assert np.all(np.abs(counts / 3000 - 0.5) < 0.05)


def test_degenerate_split_errors():
    with pytest.raises(ValueError, match="degenerate"):
        make_splits(4, ratio=0.95, repeats=1, seed=0)
    with pytest.raises(ValueError, match="ratio"):
        make_splits(10, ratio=1.0, repeats=1, seed=0)


def test_subsample_plan_and_realize():
    ds = dataset(n=10)
    plan = make_subsamples(10, fraction=0.7, repeats=4, seed=5)
    for rep in plan.repeats:
        assert len(rep.indices) == 7
        sub = realize(ds, plan, rep)
        assert sub.sample_ids == tuple(rep.indices)


def test_plan_json_roundtrip():
    plan = make_splits(12, ratio=0.7, repeats=3, seed=2)
    back = PerturbationPlan.from_json(plan.to_json())
    assert back == plan
    assert back.content_hash() == plan.content_hash()
    payload = json.loads(plan.to_json())
    assert payload["version"] == 1
    assert payload["repeats"][0]["train"]  # explicit index arrays


def test_plan_rejects_unknown_version():
    payload = json.loads(make_subsamples(5, fraction=0.8, repeats=1, seed=0).to_json())
    payload["version"] = 2
    with pytest.raises(ValueError, match="version"):
        PerturbationPlan.from_json(json.dumps(payload))


def test_noise_sigma_zero_is_exact_identity():
    ds = dataset()
    plan = make_noise_plan(10, dist="normal", sigma=0.0, repeats=2, seed=3)
    out = realize(ds, plan, plan.repeats[0])
    assert out.features is ds.features


def test_noise_statistics():
    ds = dataset(n=200, p=50)
    plan = make_noise_plan(200, dist="normal", sigma=0.5, repeats=2, seed=3)
    noisy = realize(ds, plan, plan.repeats[0])
    delta = noisy.features - ds.features
    assert abs(delta.std() - 0.5) < 0.02
    # laplace sigma is the scale b, so the variance is 2 b^2
    plan = make_noise_plan(200, dist="laplace", sigma=0.5, repeats=2, seed=3)
    delta = realize(ds, plan, plan.repeats[0]).features - ds.features
    assert abs(delta.var() - 2 * 0.25) < 0.05


def test_noise_never_touches_target():
    ds = dataset(task="regression", target=np.arange(10.0))
    plan = make_noise_plan(10, dist="normal", sigma=1.0, repeats=1, seed=0)
    noisy = realize(ds, plan, plan.repeats[0])
    assert np.array_equal(noisy.target, ds.target)


def test_noise_repeats_differ_but_rerun_identically():
    ds = dataset()
    plan = make_noise_plan(10, dist="normal", sigma=1.0, repeats=2, seed=0)
    a0 = realize(ds, plan, plan.repeats[0]).features
    a1 = realize(ds, plan, plan.repeats[1]).features
    again = realize(ds, plan, plan.repeats[0]).features
    assert not np.array_equal(a0, a1)
    assert np.array_equal(a0, again)


def test_sigma_sweep_example():
    assert sigma_sweep(0, 5, 6) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    assert sigma_sweep(2, 2, 1) == (2.0,)
    with pytest.raises(ValueError):
        sigma_sweep(5, 0, 3)
    with pytest.raises(ValueError):
        sigma_sweep(0, 5, 1)


def test_realize_checks_plan_size():
    ds = dataset(n=10)
    plan = make_splits(11, ratio=0.7, repeats=1, seed=0)
    with pytest.raises(ValueError, match="11 samples"):
        realize(ds, plan, plan.repeats[0])
