"""Working-model fits: propensity score, outcome regression, and contrast.

Two families cover the supported designs.  The frequency family is the
saturated nonparametric fit for discrete covariates: treated rates and
arm-wise means per covariate cell.  The spline family targets a single
continuous covariate (the last column) through a cubic B-spline basis,
optionally interacted with a leading binary covariate; the propensity uses
a logistic link fitted by IRLS with a linear-probability fallback.

Every propensity prediction is truncated to the configured bounds, and a
fitted object is immutable: prediction is a pure function safe to call
concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import AnalysisError, Dataset

__all__ = [
    "NuisanceConfig",
    "PropensityFit",
    "OutcomeFit",
    "spline_basis",
    "fit_propensity",
    "fit_outcome",
]

_IRLS_MAX_ITER = 50
_IRLS_TOL = 1e-8


@dataclass(frozen=True)
class NuisanceConfig:
    """Which family to fit and its knobs.

    ``spline_df`` counts basis functions per continuous covariate; the
    interaction flag crosses the basis with the first covariate so the
    contrast can vary with it.
    """

    family: str = "frequency"
    spline_df: int = 6
    truncation: tuple = (0.05, 0.95)
    interaction_with_first_covariate: bool = True

    def __post_init__(self):
        if self.family not in ("frequency", "spline"):
            raise AnalysisError("bad-config", f"unknown nuisance family {self.family!r}")
        lo, hi = self.truncation
        if not (0.0 < lo < hi < 1.0):
            raise AnalysisError("bad-config", "truncation bounds must satisfy 0 < lo < hi < 1")
        if self.family == "spline" and self.spline_df < 4:
            raise AnalysisError("bad-config", "spline_df must be at least 4")


@dataclass(frozen=True)
class PropensityFit:
    """Fitted treatment-probability model; ``predict`` maps x to P(A=1 | x)."""

    predict: Callable
    trained_on: np.ndarray
    truncation: tuple


@dataclass(frozen=True)
class OutcomeFit:
    """Fitted outcome model; ``contrast(x)`` is exactly predict(1,x) - predict(0,x)."""

    predict: Callable
    contrast: Callable
    trained_on: np.ndarray


def spline_basis(u, knots):
    """Cubic B-spline basis values at ``u`` for strictly increasing breakpoints.

    Boundary breakpoints are repeated to clamp the basis, which yields
    ``len(knots) + 2`` functions summing to 1 on the span; ``u`` outside the
    span is evaluated at the nearest edge.  Accepts a scalar or a vector and
    returns a vector or an (m, nbasis) matrix accordingly.
    """
    br = np.asarray(knots, dtype=float)
    if br.ndim != 1 or np.any(np.diff(br) <= 0):
        raise AnalysisError("bad-knots", "breakpoints must be strictly increasing")
    if len(br) + 6 < 8:
        raise AnalysisError("bad-knots", "knot vector has fewer than 8 entries including boundary repetition")
    t = np.concatenate((np.repeat(br[0], 3), br, np.repeat(br[-1], 3)))
    nb = len(t) - 4
    scalar = np.ndim(u) == 0
    uc = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), br[0], br[-1])
    span = np.searchsorted(t, uc, side="right") - 1
    span = np.clip(span, 3, nb - 1)
    m = len(uc)
    # de Boor's recursion, vectorized over evaluation points; the clipped
    # span guarantees every denominator covers a nonempty knot interval.
    vals = np.zeros((m, 4))
    vals[:, 0] = 1.0
    left = np.zeros((m, 4))
    right = np.zeros((m, 4))
    for j in range(1, 4):
        left[:, j] = uc - t[span + 1 - j]
        right[:, j] = t[span + j] - uc
        saved = np.zeros(m)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    out = np.zeros((m, nb))
    out[np.arange(m)[:, None], span[:, None] + np.arange(-3, 1)] = vals
    return out[0] if scalar else out


def _as_rows(x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _check_index(idx, what):
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        raise AnalysisError("empty-index", f"cannot fit {what} on an empty index set")
    return idx


def _cell_table(x):
    cells, inv = np.unique(x, axis=0, return_inverse=True)
    lookup = {cells[i].tobytes(): i for i in range(len(cells))}
    return cells, inv, lookup


def _match_cells(lookup, rows):
    """Training-cell id per query row, -1 for cells never seen."""
    uniq, inv = np.unique(np.ascontiguousarray(rows), axis=0, return_inverse=True)
    ids = np.fromiter((lookup.get(u.tobytes(), -1) for u in uniq), dtype=int, count=len(uniq))
    return ids[inv]


@dataclass(frozen=True)
class _SplineDesign:
    """Design-matrix builder shared by the fit and all later predictions."""

    breaks: np.ndarray
    dim: int
    interact: bool

    # Crossing the basis with the first covariate fits a separate curve per
    # level, so each (group, level) stratum must carry its own curve; below
    # 4 rows per basis column the stratum fit is too wild to use.
    _ROWS_PER_COLUMN = 4

    @classmethod
    def from_training(cls, x, cfg, cap, strata_min=None):
        u = x[:, -1]
        lo, hi = np.percentile(u, [1.0, 99.0])
        if hi - lo <= 1e-12:
            raise AnalysisError("spline-degenerate", "continuous covariate has no spread")
        dim = x.shape[1]
        interact = cfg.interaction_with_first_covariate and dim >= 2 and strata_min is not None
        if interact:
            df = min(cfg.spline_df, strata_min // cls._ROWS_PER_COLUMN)
            while df >= 4 and cls._ncols(df, dim, True) > cap:
                df -= 1
            if df >= 4:
                return cls(breaks=np.linspace(lo, hi, df - 2), dim=dim, interact=True)
        df = cfg.spline_df
        while df >= 4 and cls._ncols(df, dim, False) > cap:
            df -= 1
        if df < 4:
            raise AnalysisError(
                "spline-underdetermined",
                f"{cap} observations cannot support a spline design of width "
                f"{cls._ncols(4, dim, False)}",
            )
        return cls(breaks=np.linspace(lo, hi, df - 2), dim=dim, interact=False)

    @staticmethod
    def _ncols(df, dim, interact):
        extra = df if interact else (1 if dim >= 2 else 0)
        return df + extra + max(dim - 2, 0)

    def design(self, rows):
        basis = spline_basis(rows[:, -1], self.breaks)
        cols = [basis]
        if self.dim >= 2:
            cols.append(basis * rows[:, :1] if self.interact else rows[:, :1])
            cols.extend(rows[:, c:c + 1] for c in range(1, self.dim - 1))
        return np.hstack(cols)


def _level_strata_min(x, groups=None):
    """Smallest (group, level) stratum when the first covariate is binary,
    else None; gates whether an interacted design is estimable."""
    if x.shape[1] < 2:
        return None
    lead = x[:, 0]
    levels = np.unique(lead)
    if not np.all(np.isin(levels, (0.0, 1.0))) or len(levels) < 2:
        return None
    if groups is None:
        groups = np.zeros(len(x), dtype=int)
    smallest = None
    for g in np.unique(groups):
        for lv in (0.0, 1.0):
            count = int(((groups == g) & (lead == lv)).sum())
            smallest = count if smallest is None else min(smallest, count)
    return smallest


def _sigmoid(eta):
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -30.0, 30.0)))


def _irls_logistic(design, target):
    """Logistic coefficients, or None when IRLS fails to converge."""
    beta = np.zeros(design.shape[1])
    for _ in range(_IRLS_MAX_ITER):
        eta = design @ beta
        prob = _sigmoid(eta)
        w = np.maximum(prob * (1.0 - prob), 1e-10)
        sw = np.sqrt(w)
        z = eta + (target - prob) / w
        new, _, _, _ = np.linalg.lstsq(design * sw[:, None], z * sw, rcond=None)
        if not np.all(np.isfinite(new)):
            return None
        if np.max(np.abs(new - beta)) < _IRLS_TOL:
            return new
        beta = new
    return None


def fit_propensity(ds: Dataset, idx, cfg: NuisanceConfig) -> PropensityFit:
    """Fit P(A=1 | x) on the given index set.

    Frequency family: treated rate per covariate cell, falling back to the
    marginal rate for cells unseen in training.  Spline family: logistic
    fit on the spline design, or a clipped linear-probability fit when IRLS
    does not converge.  Predictions are always truncated.
    """
    idx = _check_index(idx, "propensity")
    x = ds.x[idx]
    a = np.asarray(ds.a[idx], dtype=float)
    lo, hi = cfg.truncation
    if a.min() == a.max():
        raise AnalysisError("propensity-degenerate", "propensity degenerate")

    if cfg.family == "frequency":
        cells, inv, lookup = _cell_table(x)
        counts = np.bincount(inv)
        rate = np.clip(np.bincount(inv, weights=a) / counts, lo, hi)
        fallback = float(np.clip(a.mean(), lo, hi))

        def predict(xq):
            rows, single = _as_rows(xq)
            ids = _match_cells(lookup, rows)
            out = np.where(ids >= 0, rate[np.maximum(ids, 0)], fallback)
            return float(out[0]) if single else out

    else:
        builder = _SplineDesign.from_training(x, cfg, cap=len(idx), strata_min=_level_strata_min(x))
        design = builder.design(x)
        beta = _irls_logistic(design, a)
        if beta is None:
            beta_lin, _, _, _ = np.linalg.lstsq(design, a, rcond=None)

            def _raw(rows):
                return builder.design(rows) @ beta_lin

        else:

            def _raw(rows):
                return _sigmoid(builder.design(rows) @ beta)

        def predict(xq):
            rows, single = _as_rows(xq)
            out = np.clip(_raw(rows), lo, hi)
            return float(out[0]) if single else out

    return PropensityFit(predict=predict, trained_on=idx, truncation=(lo, hi))


def fit_outcome(ds: Dataset, idx, cfg: NuisanceConfig) -> OutcomeFit:
    """Fit the arm-wise outcome regression on the given index set.

    Frequency family: mean outcome per (cell, arm), with an arm-wise grand
    mean for cells the arm never visited.  Spline family: per-arm least
    squares on a shared spline design; the requested df shrinks (never
    below 4) until the design fits inside the smaller arm.
    """
    idx = _check_index(idx, "outcome regression")
    x = ds.x[idx]
    a = np.asarray(ds.a[idx], dtype=int)
    y = ds.y[idx]
    n0 = int((a == 0).sum())
    n1 = int((a == 1).sum())
    if n0 == 0 or n1 == 0:
        raise AnalysisError("outcome-degenerate", "outcome regression needs both treatment arms")

    if cfg.family == "frequency":
        cells, inv, lookup = _cell_table(x)
        ncell = len(cells)
        key = inv * 2 + a
        sums = np.bincount(key, weights=y, minlength=2 * ncell)
        cnt = np.bincount(key, minlength=2 * ncell)
        table = (sums / np.maximum(cnt, 1)).reshape(ncell, 2)
        have = (cnt > 0).reshape(ncell, 2)
        grand = np.array([y[a == 0].mean(), y[a == 1].mean()])

        def predict(arm, xq):
            rows, single = _as_rows(xq)
            ids = _match_cells(lookup, rows)
            arm_arr = np.broadcast_to(np.asarray(arm, dtype=int), len(rows))
            safe = np.maximum(ids, 0)
            known = (ids >= 0) & have[safe, arm_arr]
            out = np.where(known, table[safe, arm_arr], grand[arm_arr])
            return float(out[0]) if single else out

    else:
        builder = _SplineDesign.from_training(
            x, cfg, cap=min(n0, n1), strata_min=_level_strata_min(x, groups=a)
        )
        design = builder.design(x)
        betas = []
        for arm in (0, 1):
            mask = a == arm
            beta, _, _, _ = np.linalg.lstsq(design[mask], y[mask], rcond=None)
            betas.append(beta)

        def predict(arm, xq):
            rows, single = _as_rows(xq)
            design_q = builder.design(rows)
            mu = np.where(
                np.broadcast_to(np.asarray(arm, dtype=int), len(rows)) == 1,
                design_q @ betas[1],
                design_q @ betas[0],
            )
            return float(mu[0]) if single else mu

    def contrast(xq):
        return predict(1, xq) - predict(0, xq)

    return OutcomeFit(predict=predict, contrast=contrast, trained_on=idx)
