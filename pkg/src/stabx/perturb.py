"""Seeded data perturbations: train/test splits, subsamples, additive noise.

A perturbation plan is generated once per (dataset, scheme) and records the
exact row indices (or noise seeds) for every repeat, so any repeat can be
reproduced in isolation and plans can be shipped to out-of-process runners.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import TabularDataset

PLAN_KINDS = ("split", "subsample", "noise")
NOISE_DISTS = ("normal", "laplace")


def derive_seed(base_seed: int, index: int) -> int:
    """Child seed for repeat ``index`` — splittable, not sequential."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def sample_without_replacement(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Draw k of n indices without replacement (partial Fisher-Yates)."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} from {n}")
    pool = np.arange(n)
    for i in range(k):
        j = i + int(rng.integers(0, n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


@dataclass(frozen=True)
class Repeat:
    """One perturbation instance: a seed plus the rows it selected."""

    index: int
    seed: int
    train: Optional[tuple] = None
    test: Optional[tuple] = None
    indices: Optional[tuple] = None


@dataclass(frozen=True)
class PerturbationPlan:
    kind: str
    base_seed: int
    n_samples: int
    repeats: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not self.repeats:
            raise ValueError("plan must have at least one repeat")

    @property
    def n_repeats(self) -> int:
        return len(self.repeats)

    def to_json(self) -> str:
        def enc(r: Repeat) -> dict:
            d = {"index": r.index, "seed": r.seed}
            if r.train is not None:
                d["train"] = list(r.train)
                d["test"] = list(r.test)
            if r.indices is not None:
                d["indices"] = list(r.indices)
            return d

        payload = {
            "version": 1,
            "kind": self.kind,
            "base_seed": self.base_seed,
            "n_samples": self.n_samples,
            "params": self.params,
            "repeats": [enc(r) for r in self.repeats],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PerturbationPlan":
        payload = json.loads(text)
        if payload.get("version") != 1:
            raise ValueError(f"unsupported plan version {payload.get('version')!r}")
        reps = tuple(
            Repeat(
                index=r["index"],
                seed=r["seed"],
                train=tuple(r["train"]) if "train" in r else None,
                test=tuple(r["test"]) if "test" in r else None,
                indices=tuple(r["indices"]) if "indices" in r else None,
            )
            for r in payload["repeats"]
        )
        return cls(
            kind=payload["kind"],
            base_seed=payload["base_seed"],
            n_samples=payload["n_samples"],
            repeats=reps,
            params=payload.get("params", {}),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def make_splits(n_samples: int, *, ratio: float = 0.7, repeats: int = 100, seed: int = 0) -> PerturbationPlan:
    """Repeated train/test splits; |train| = round(ratio * n) (half up)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    t = int(math.floor(ratio * n_samples + 0.5))
    if t < 2 or n_samples - t < 1:
        raise ValueError(
            f"ratio {ratio} on {n_samples} samples leaves a degenerate split "
            f"({t} train / {n_samples - t} test)"
        )
    reps = []
    for i in range(repeats):
        s = derive_seed(seed, i)
        rng = np.random.default_rng(s)
        train = sample_without_replacement(rng, n_samples, t)
        mask = np.ones(n_samples, dtype=bool)
        mask[train] = False
        reps.append(
            Repeat(
                index=i,
                seed=s,
                train=tuple(int(x) for x in np.sort(train)),
                test=tuple(int(x) for x in np.flatnonzero(mask)),
            )
        )
    return PerturbationPlan(
        kind="split",
        base_seed=seed,
        n_samples=n_samples,
        repeats=tuple(reps),
        params={"ratio": ratio},
    )


def make_subsamples(n_samples: int, *, fraction: float = 0.7, repeats: int = 100, seed: int = 0) -> PerturbationPlan:
    """Repeated subsamples without replacement of round(fraction * n) rows."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"subsample fraction must be in (0, 1], got {fraction}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    m = int(math.floor(fraction * n_samples + 0.5))
    if m < 2:
        raise ValueError(f"fraction {fraction} keeps {m} of {n_samples} samples")
    reps = []
    for i in range(repeats):
        s = derive_seed(seed, i)
        rng = np.random.default_rng(s)
        keep = sample_without_replacement(rng, n_samples, m)
        reps.append(Repeat(index=i, seed=s, indices=tuple(int(x) for x in np.sort(keep))))
    return PerturbationPlan(
        kind="subsample",
        base_seed=seed,
        n_samples=n_samples,
        repeats=tuple(reps),
        params={"fraction": fraction},
    )


def make_noise_plan(
    n_samples: int,
    *,
    dist: str = "normal",
    sigma: float = 0.5,
    repeats: int = 100,
    seed: int = 0,
) -> PerturbationPlan:
    """Additive feature-noise repeats; each repeat stores just its seed."""
    if dist not in NOISE_DISTS:
        raise ValueError(f"noise dist must be one of {NOISE_DISTS}, got {dist!r}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    reps = tuple(Repeat(index=i, seed=derive_seed(seed, i)) for i in range(repeats))
    return PerturbationPlan(
        kind="noise",
        base_seed=seed,
        n_samples=n_samples,
        repeats=reps,
        params={"dist": dist, "sigma": float(sigma)},
    )


def apply_noise(dataset: TabularDataset, repeat: Repeat, *, dist: str, sigma: float) -> TabularDataset:
    """Add elementwise noise to the features; the target is never touched.

    ``sigma`` is the normal standard deviation or the Laplace scale.  A zero
    sigma returns the dataset unchanged so sweep origins are exact.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return dataset
    rng = np.random.default_rng(repeat.seed)
    shape = dataset.features.shape
    if dist == "normal":
        noise = rng.normal(0.0, sigma, size=shape)
    elif dist == "laplace":
        noise = rng.laplace(0.0, sigma, size=shape)
    else:
        raise ValueError(f"noise dist must be one of {NOISE_DISTS}, got {dist!r}")
    return dataset.with_features(dataset.features + noise)


def realize(dataset: TabularDataset, plan: PerturbationPlan, repeat: Repeat):
    """Materialize one repeat of a plan against its dataset.

    Returns ``(train, test)`` for splits and a single dataset otherwise.
    """
    if plan.n_samples != dataset.n_samples:
        raise ValueError(
            f"plan was built for {plan.n_samples} samples, dataset has {dataset.n_samples}"
        )
    if plan.kind == "split":
        return dataset.take(repeat.train), dataset.take(repeat.test)
    if plan.kind == "subsample":
        return dataset.take(repeat.indices)
    if plan.kind == "noise":
        return apply_noise(dataset, repeat, dist=plan.params["dist"], sigma=plan.params["sigma"])
    raise ValueError(f"unknown perturbation kind {plan.kind!r}")


def sigma_sweep(lo: float, hi: float, steps: int) -> tuple:
    """Evenly spaced noise levels from lo to hi inclusive."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if lo < 0 or hi < lo:
        raise ValueError(f"need 0 <= lo <= hi, got [{lo}, {hi}]")
    if steps == 1:
        if lo != hi:
            raise ValueError("steps == 1 requires lo == hi")
        return (float(lo),)
    return tuple(float(s) for s in np.linspace(lo, hi, steps))
