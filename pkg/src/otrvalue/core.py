"""Data model, fold plans, and the deterministic randomness contract.

Everything downstream (nuisance fitting, estimators, the Monte Carlo
harness) consumes the immutable containers defined here and draws its
randomness through :func:`derive_rng`, so that a single 64-bit master seed
pins down every result regardless of execution order or worker count.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AnalysisError",
    "Observation",
    "Dataset",
    "FoldPlan",
    "Estimate",
    "ValidationReport",
    "derive_seed",
    "derive_rng",
    "make_fold_plan",
    "validate_dataset",
    "standard_normal_quantile",
]


class AnalysisError(Exception):
    """Package error with a stable machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Observation:
    """A single record: covariate vector ``x``, treatment ``a``, outcome ``y``."""

    x: np.ndarray
    a: int
    y: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "x", x)
        if self.a not in (0, 1):
            raise AnalysisError("bad-treatment", f"treatment must be 0 or 1, got {self.a!r}")
        if not np.all(np.isfinite(x)):
            raise AnalysisError("bad-covariate", "covariates must be finite")
        if not math.isfinite(self.y):
            raise AnalysisError("bad-outcome", "outcome must be finite")


@dataclass(frozen=True)
class Dataset:
    """Immutable table of observations stored column-wise.

    ``x`` is (n, d) float, ``a`` is (n,) in {0,1}, ``y`` is (n,) float.
    Value-level problems (non-binary treatment, non-finite entries, a single
    treatment arm) are reported by :func:`validate_dataset` rather than
    rejected here.
    """

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        a = np.asarray(self.a)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise AnalysisError("bad-shape", "covariates must form a 2-d array")
        if not (len(x) == len(a) == len(y)):
            raise AnalysisError("bad-shape", "x, a, y must have equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def observation(self, i: int) -> Observation:
        return Observation(x=self.x[i], a=int(self.a[i]), y=float(self.y[i]))

    @classmethod
    def from_observations(cls, observations) -> "Dataset":
        obs = list(observations)
        if not obs:
            raise AnalysisError("empty-dataset", "dataset has no observations")
        dims = {len(np.atleast_1d(o.x)) for o in obs}
        if len(dims) != 1:
            raise AnalysisError("bad-shape", "observations have mixed covariate dimensions")
        return cls(
            x=np.vstack([np.atleast_1d(o.x) for o in obs]),
            a=np.array([o.a for o in obs]),
            y=np.array([o.y for o in obs]),
        )


@dataclass(frozen=True)
class FoldPlan:
    """Nested random bipartition: halves ``i1``/``i2`` and their quarters.

    ``quarters[(j, k)]`` is the k-th quarter of half j.  ``|i1| = floor(n/2)``
    and every quarter size is within one of n/4; the odd unit always lands in
    the later half/quarter.
    """

    i1: np.ndarray
    i2: np.ndarray
    quarters: dict = field(repr=False)
    seed: int = 0

    @property
    def n(self) -> int:
        return len(self.i1) + len(self.i2)

    def half(self, j: int) -> np.ndarray:
        return self.i1 if j == 1 else self.i2

    def quarter_complement(self, j: int, k: int) -> np.ndarray:
        """All indices outside quarter (j, k) — three quarters of the data."""
        others = [self.quarters[jk] for jk in ((1, 1), (1, 2), (2, 1), (2, 2)) if jk != (j, k)]
        return np.sort(np.concatenate(others))


@dataclass(frozen=True)
class Estimate:
    """Point value with its standard-deviation estimate and sample size."""

    value: float
    sigma: float
    n: int
    method: str

    def __post_init__(self):
        if self.sigma < 0:
            raise AnalysisError("bad-estimate", "sigma must be nonnegative")


@dataclass(frozen=True)
class ValidationReport:
    """Report-only summary of dataset problems; empty ``issues`` means clean."""

    issues: tuple

    @property
    def ok(self) -> bool:
        return not self.issues


def derive_seed(master_seed: int, label: str, index: int = 0) -> int:
    """Stable 64-bit stream seed for (master seed, purpose label, index)."""
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(8, "little", signed=False))
    h.update(label.encode("utf-8"))
    h.update(int(index).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(master_seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one purpose; order-independent across uses."""
    return np.random.default_rng(derive_seed(master_seed, label, index))


def make_fold_plan(n: int, seed: int) -> FoldPlan:
    """Draw the nested bipartition used for cross-fitting.

    Uniform over admissible partitions and deterministic given (n, seed).
    Sizes: |i1| = floor(n/2); within each half the first quarter gets
    floor(half/2) indices, so any odd units land in the later pieces.
    """
    if n < 8:
        raise AnalysisError("insufficient-sample", "insufficient sample for nested bipartition")
    rng = derive_rng(seed, "fold-plan")
    perm = rng.permutation(n)
    n1 = n // 2
    i1, i2 = np.sort(perm[:n1]), np.sort(perm[n1:])
    quarters = {}
    for j, half in ((1, perm[:n1]), (2, perm[n1:])):
        m = len(half) // 2
        quarters[(j, 1)] = np.sort(half[:m])
        quarters[(j, 2)] = np.sort(half[m:])
    return FoldPlan(i1=i1, i2=i2, quarters=quarters, seed=seed)


def validate_dataset(ds: Dataset) -> ValidationReport:
    """List value-level violations without raising."""
    issues = []
    if ds.n == 0:
        return ValidationReport(issues=("empty dataset",))
    a = np.asarray(ds.a)
    if not np.all(np.isin(a, (0, 1))):
        issues.append("non-binary treatment")
    else:
        present = set(np.unique(a).tolist())
        if present != {0, 1}:
            issues.append("single treatment arm")
    if not np.all(np.isfinite(ds.x)):
        issues.append("non-finite covariate")
    if not np.all(np.isfinite(ds.y)):
        issues.append("non-finite outcome")
    return ValidationReport(issues=tuple(issues))


# Acklam's rational approximation to the standard normal inverse CDF,
# refined with one Halley step to ~1e-15 absolute error.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def _norm_ppf(q: float) -> float:
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    q_lo = 0.02425
    if q < q_lo:
        u = math.sqrt(-2.0 * math.log(q))
        x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / \
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0)
    elif q <= 1.0 - q_lo:
        u = q - 0.5
        r = u * u
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) / \
            ((((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0)
    # Halley refinement against the exact CDF via erfc.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def standard_normal_quantile(p: float) -> float:
    """Upper p-quantile of the standard normal: z with P(Z > z) = p."""
    if not (0.0 < p < 1.0):
        raise AnalysisError("bad-probability", f"quantile level must lie in (0, 1), got {p!r}")
    return _norm_ppf(1.0 - p)
