"""Comparison estimators: simple sample split, subbagging, the in-sample
plug-in used as the winner's-curse exhibit, and the oracle that knows the
truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AnalysisError, Dataset, Estimate, derive_rng, derive_seed, make_fold_plan
from .estimator import _psi_values
from .nuisance import NuisanceConfig, fit_outcome, fit_propensity

__all__ = [
    "SubbaggingConfig",
    "sss_value",
    "subbagging_value",
    "aggregate_subbag_decision",
    "insample_plugin_value",
    "oracle_value",
]


@dataclass(frozen=True)
class SubbaggingConfig:
    """Subsample size and count for the aggregated soft decision.

    By default s_n = ceil(n^subsample_exponent); the legacy ``k0`` knob maps
    to s_n = ceil(n / k0) instead when set.
    """

    subsample_exponent: float = 0.8
    b: int = 200
    k0: int | None = None

    def __post_init__(self):
        if not (0.0 < self.subsample_exponent < 1.0):
            raise AnalysisError("bad-config", "subsample exponent must lie in (0, 1)")
        if self.b < 1:
            raise AnalysisError("bad-config", "need at least one subsample")
        if self.k0 is not None and self.k0 < 2:
            raise AnalysisError("bad-config", "k0 must be at least 2")

    def subsample_size(self, n: int) -> int:
        if self.k0 is not None:
            return math.ceil(n / self.k0)
        return math.ceil(n ** self.subsample_exponent)


def sss_value(ds: Dataset, seed: int, cfg: NuisanceConfig) -> Estimate:
    """Simple sample split: learn the rule and nuisances on one random half,
    score the other half.  The reported n is the scored half, so the interval
    widens by sqrt(2) relative to full-sample methods."""
    if ds.n < 8:
        raise AnalysisError("insufficient-sample", "insufficient sample for nested bipartition")
    rng = derive_rng(seed, "sample-split")
    perm = rng.permutation(ds.n)
    train = np.sort(perm[: ds.n // 2])
    held = np.sort(perm[ds.n // 2:])
    of = fit_outcome(ds, train, cfg)
    pf = fit_propensity(ds, train, cfg)
    xh = ds.x[held]
    d = (of.contrast(xh) > 0).astype(float)
    scores = _psi_values(ds.y[held], ds.a[held], d, pf.predict(xh), of.predict(1, xh), of.predict(0, xh))
    return Estimate(
        value=float(scores.mean()),
        sigma=float(np.std(scores, ddof=1)),
        n=len(held),
        method="sss",
    )


def aggregate_subbag_decision(ds: Dataset, subsamples, cfg: NuisanceConfig) -> np.ndarray:
    """Average of hard decisions from contrast fits on each subsample.

    Subsamples whose outcome fit is degenerate are skipped; the average runs
    over the fits that succeeded, so the result is order-invariant.
    """
    votes = np.zeros(ds.n)
    used = 0
    for sub in subsamples:
        try:
            of = fit_outcome(ds, sub, cfg)
        except AnalysisError:
            continue
        votes += of.contrast(ds.x) > 0
        used += 1
    if used == 0:
        raise AnalysisError("subbagging-degenerate", "every subsample produced a degenerate fit")
    return votes / used


def subbagging_value(ds: Dataset, sc: SubbaggingConfig, seed: int, cfg: NuisanceConfig) -> Estimate:
    """Soft decision averaged over b subsample fits, scored with cross-fitted
    nuisances on a half split."""
    s_n = sc.subsample_size(ds.n)
    if not 1 <= s_n < ds.n:
        raise AnalysisError("bad-config", f"subsample size {s_n} must be below n={ds.n}")
    rng = derive_rng(seed, "subbagging")
    subsamples = [np.sort(rng.choice(ds.n, size=s_n, replace=False)) for _ in range(sc.b)]
    d_tilde = aggregate_subbag_decision(ds, subsamples, cfg)

    plan = make_fold_plan(ds.n, derive_seed(seed, "subbagging-plan"))
    chunks = []
    for j in (1, 2):
        half = plan.half(j)
        other = plan.half(3 - j)
        of = fit_outcome(ds, other, cfg)
        pf = fit_propensity(ds, other, cfg)
        xh = ds.x[half]
        chunks.append(
            _psi_values(
                ds.y[half], ds.a[half], d_tilde[half], pf.predict(xh), of.predict(1, xh), of.predict(0, xh)
            )
        )
    pooled = np.concatenate(chunks)
    return Estimate(
        value=float(pooled.mean()),
        sigma=float(np.std(pooled, ddof=1)),
        n=ds.n,
        method="subbagging",
    )


def insample_plugin_value(ds: Dataset) -> Estimate:
    """Full-sample plug-in without any splitting: rule, nuisances, and scores
    all come from the same data, so selected groups look better than they
    are.  Kept as the bias exhibit, not as a recommended estimator."""
    cells, inv = np.unique(ds.x, axis=0, return_inverse=True)
    counts = np.bincount(inv)
    treated = np.bincount(inv, weights=np.asarray(ds.a, dtype=float))
    if np.any(treated == 0) or np.any(treated == counts):
        raise AnalysisError("group-degenerate", "a covariate group has a single treatment arm")
    cfg = NuisanceConfig(family="frequency")
    everything = np.arange(ds.n)
    of = fit_outcome(ds, everything, cfg)
    pf = fit_propensity(ds, everything, cfg)
    d = (of.contrast(ds.x) > 0).astype(float)
    scores = _psi_values(ds.y, ds.a, d, pf.predict(ds.x), of.predict(1, ds.x), of.predict(0, ds.x))
    return Estimate(
        value=float(scores.mean()),
        sigma=float(np.std(scores, ddof=1)),
        n=ds.n,
        method="in_sample_plugin",
    )


def oracle_value(ds: Dataset, truth) -> Estimate:
    """Scores computed with the true rule, propensity, and outcome means.

    ``truth`` must expose tau_of(x), pi1_of(x), mu_of(a, x) over row arrays.
    """
    x = ds.x
    tau = truth.tau_of(x)
    d = (tau > 0).astype(float)
    scores = _psi_values(ds.y, ds.a, d, truth.pi1_of(x), truth.mu_of(1, x), truth.mu_of(0, x))
    return Estimate(
        value=float(scores.mean()),
        sigma=float(np.std(scores, ddof=1)),
        n=ds.n,
        method="oracle",
    )
