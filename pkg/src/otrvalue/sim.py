"""Benchmark data-generating processes, their analytic ground truth, and the
Monte Carlo harness that scores estimators by coverage and interval length.

Five two-covariate scenarios (A through E) follow the model
Y = phi(X1, X2) + A * tau(X1, X2) + e with e ~ Normal(0, 0.25); A, C, and E
put positive mass on {tau = 0}, which is what separates the estimators under
test.  A toy single-covariate trial and a balanced variant of E round out
the registry.  Everything is deterministic given a master seed, and the
harness aggregates by replication index so worker count and completion
order never change a report.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .baselines import SubbaggingConfig, insample_plugin_value, oracle_value, sss_value, subbagging_value
from .core import AnalysisError, Dataset, derive_rng, derive_seed, make_fold_plan
from .estimator import (
    SmoothingParams,
    TuningConfig,
    adaptive_smoothing_value,
    confidence_interval,
    plug_in_value,
    smoothing_value,
    tune_bandwidths,
)
from .nuisance import NuisanceConfig

__all__ = [
    "ScenarioSpec",
    "SimulatedDataset",
    "McReport",
    "MethodSummary",
    "SCENARIOS",
    "generate_scenario",
    "true_value",
    "analytic_asymptotic_variance",
    "run_monte_carlo",
    "toy_example_report",
    "report_to_csv",
    "toy_report_to_csv",
]

_QUANTILE_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class SimulatedDataset(Dataset):
    """Dataset plus the potential outcomes that produced it.

    The extra columns exist for oracle checks only; estimators receive the
    same (x, a, y) surface as any observed dataset.
    """

    y0: np.ndarray = field(default=None, repr=False)
    y1: np.ndarray = field(default=None, repr=False)
    scenario: str = ""


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generating process and its closed-form truth.

    ``phi``, ``tau``, ``pi1`` are vectorized callables of (x1, x2).  For
    continuous x2, ``sign_segments(x1)`` lists (lo, hi, sign-of-tau)
    segments so indicator integrands stay exact under quadrature.
    """

    id: str
    x1_law: tuple
    x2_law: tuple | None
    phi: Callable
    tau: Callable
    pi1: Callable
    v0: float
    regular: bool
    noise_sd: float = 0.5
    family: str = "frequency"
    sign_segments: Callable | None = None
    analytic_variance: float | None = None

    def _cols(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x1 = x[:, 0]
        x2 = x[:, 1] if x.shape[1] > 1 else np.zeros(len(x))
        return x1, x2

    def tau_of(self, x):
        return self.tau(*self._cols(x))

    def pi1_of(self, x):
        x1, x2 = self._cols(x)
        return np.broadcast_to(np.asarray(self.pi1(x1, x2), dtype=float), x1.shape).copy()

    def mu_of(self, a, x):
        x1, x2 = self._cols(x)
        base = np.asarray(self.phi(x1, x2), dtype=float)
        return base + np.asarray(a, dtype=float) * self.tau(x1, x2)


def _const(v):
    return lambda x1, x2: np.full_like(np.asarray(x1, dtype=float), v)


def _segments_by_x1(zero, pos):
    """Sign map: tau vanishes when x1 = 0 and keeps one sign when x1 = 1."""

    def segments(x1v):
        return zero if x1v == 0 else pos

    return segments


SCENARIOS = {
    "A": ScenarioSpec(
        id="A",
        x1_law=("bernoulli", 0.4),
        x2_law=("bernoulli", 0.5),
        phi=_const(0.3),
        tau=lambda x1, x2: 0.4 * x1,
        pi1=lambda x1, x2: 0.7 + 0.1 * x1,
        v0=0.46,
        regular=False,
        family="frequency",
        analytic_variance=0.3134,
    ),
    "B": ScenarioSpec(
        id="B",
        x1_law=("bernoulli", 0.5),
        x2_law=("bernoulli", 0.5),
        phi=_const(0.3),
        tau=_const(0.4),
        pi1=lambda x1, x2: 0.5 + 0.3 * x1,
        v0=0.7,
        regular=True,
        family="frequency",
        analytic_variance=0.40625,
    ),
    "C": ScenarioSpec(
        id="C",
        x1_law=("bernoulli", 0.3),
        x2_law=("uniform", -2.0, 2.0),
        phi=lambda x1, x2: (x2 / 4.0) ** 2,
        tau=lambda x1, x2: x1 * (x2 / 4.0) ** 2,
        pi1=_const(0.8),
        v0=13.0 / 120.0,
        regular=False,
        family="spline",
        sign_segments=_segments_by_x1(((-2.0, 2.0, 0),), ((-2.0, 0.0, 1), (0.0, 2.0, 1))),
    ),
    "D": ScenarioSpec(
        id="D",
        x1_law=("bernoulli", 0.5),
        x2_law=("uniform", -2.0, 2.0),
        phi=lambda x1, x2: x2 ** 2,
        tau=lambda x1, x2: x2 ** 2 - 4.0 / 3.0,
        pi1=lambda x1, x2: 0.5 + 0.3 * x1,
        v0=4.0 / 3.0 + 8.0 * math.sqrt(3.0) / 27.0,
        regular=True,
        family="spline",
        sign_segments=lambda x1v: (
            (-2.0, -2.0 / math.sqrt(3.0), 1),
            (-2.0 / math.sqrt(3.0), 2.0 / math.sqrt(3.0), -1),
            (2.0 / math.sqrt(3.0), 2.0, 1),
        ),
    ),
    "E": ScenarioSpec(
        id="E",
        x1_law=("bernoulli", 0.1),
        x2_law=("uniform", -2.0, 2.0),
        phi=lambda x1, x2: (x2 / 4.0) ** 2,
        tau=lambda x1, x2: x1 * np.cos(np.pi * x2 / 4.0) / 8.0,
        pi1=_const(0.8),
        v0=1.0 / (40.0 * math.pi) + 1.0 / 12.0,
        regular=False,
        family="spline",
        sign_segments=_segments_by_x1(((-2.0, 2.0, 0),), ((-2.0, 2.0, 1),)),
    ),
    # E with a balanced design; probes when adaptive centering stops paying
    # off.  Not part of the standard A-E grid.
    "Ebal": ScenarioSpec(
        id="Ebal",
        x1_law=("bernoulli", 0.1),
        x2_law=("uniform", -2.0, 2.0),
        phi=lambda x1, x2: (x2 / 4.0) ** 2,
        tau=lambda x1, x2: x1 * np.cos(np.pi * x2 / 4.0) / 8.0,
        pi1=_const(0.5),
        v0=1.0 / (40.0 * math.pi) + 1.0 / 12.0,
        regular=False,
        family="spline",
        sign_segments=_segments_by_x1(((-2.0, 2.0, 0),), ((-2.0, 2.0, 1),)),
    ),
    # Two equal groups, randomized 50/50 treatment, unit noise: treatment
    # helps one group by 1 and does nothing for the other.
    "toy": ScenarioSpec(
        id="toy",
        x1_law=("exact_half",),
        x2_law=None,
        phi=_const(0.0),
        tau=lambda x1, x2: x1,
        pi1=_const(0.5),
        v0=0.5,
        regular=False,
        noise_sd=1.0,
        family="frequency",
    ),
}


def _scenario(spec_or_id) -> ScenarioSpec:
    if isinstance(spec_or_id, ScenarioSpec):
        return spec_or_id
    try:
        return SCENARIOS[spec_or_id]
    except KeyError:
        raise AnalysisError("unknown-scenario", f"unknown scenario {spec_or_id!r}") from None


def generate_scenario(spec_or_id, n: int, seed: int) -> SimulatedDataset:
    """Draw one dataset of size n from the scenario, keeping both potential
    outcomes alongside the observed triple."""
    spec = _scenario(spec_or_id)
    if n < 8:
        raise AnalysisError("insufficient-sample", "insufficient sample for nested bipartition")
    rng = derive_rng(seed, "scenario-" + spec.id)
    kind = spec.x1_law[0]
    if kind == "bernoulli":
        x1 = (rng.random(n) < spec.x1_law[1]).astype(float)
    elif kind == "exact_half":
        if n % 2:
            raise AnalysisError("bad-config", "this scenario needs an even sample size")
        x1 = np.repeat([0.0, 1.0], n // 2)
    else:
        raise AnalysisError("bad-config", f"unknown covariate law {kind!r}")
    if spec.x2_law is None:
        x2 = np.zeros(n)
        x = x1[:, None].copy()
    else:
        if spec.x2_law[0] == "bernoulli":
            x2 = (rng.random(n) < spec.x2_law[1]).astype(float)
        elif spec.x2_law[0] == "uniform":
            x2 = rng.uniform(spec.x2_law[1], spec.x2_law[2], n)
        else:
            raise AnalysisError("bad-config", f"unknown covariate law {spec.x2_law[0]!r}")
        x = np.column_stack((x1, x2))
    a = (rng.random(n) < spec.pi1(x1, x2)).astype(int)
    e = rng.normal(0.0, spec.noise_sd, n)
    base = spec.phi(x1, x2) + e
    y1 = base + spec.tau(x1, x2)
    y = np.where(a == 1, y1, base)
    return SimulatedDataset(x=x, a=a, y=y, y0=base, y1=y1, scenario=spec.id)


def true_value(spec_or_id) -> float:
    return _scenario(spec_or_id).v0


def _adaptive_quadrature(f, lo, hi, tol=1e-9):
    value = None
    for nodes in (20, 40, 80, 160):
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        mapped = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        new = 0.5 * (hi - lo) * float(wg @ f(mapped))
        if value is not None and abs(new - value) < tol:
            return new
        value = new
    return value


def analytic_asymptotic_variance(spec_or_id, t0: float | None = None) -> float:
    """Limit variance of the smoothing estimator under the scenario's truth.

    Three pieces: the variance of the best achievable conditional mean, the
    inverse-propensity term off the tie set, and the tie-set term, which for
    a fixed center t0 carries the factor t0^2/pi + (1-t0)^2/(1-pi) and for
    the adaptive center (t0=None) collapses to the conditional variance.
    """
    spec = _scenario(spec_or_id)
    vy = spec.noise_sd ** 2
    p1 = spec.x1_law[1] if spec.x1_law[0] == "bernoulli" else 0.5
    acc = {"h": 0.0, "h2": 0.0, "reg": 0.0, "tie": 0.0}

    def accumulate(weight, x1v, x2v, sign):
        x1a = np.full_like(np.asarray(x2v, dtype=float), x1v)
        x2a = np.asarray(x2v, dtype=float)
        tau = np.asarray(spec.tau(x1a, x2a), dtype=float)
        h = np.asarray(spec.phi(x1a, x2a), dtype=float) + np.maximum(tau, 0.0)
        pi = np.broadcast_to(np.asarray(spec.pi1(x1a, x2a), dtype=float), h.shape)
        if sign > 0:
            reg = vy / pi
            tie = np.zeros_like(h)
        elif sign < 0:
            reg = vy / (1.0 - pi)
            tie = np.zeros_like(h)
        else:
            reg = np.zeros_like(h)
            if t0 is None:
                tie = np.full_like(h, vy)
            else:
                tie = vy * (t0 ** 2 / pi + (1.0 - t0) ** 2 / (1.0 - pi))
        return weight * h, weight * h ** 2, weight * reg, weight * tie

    for x1v, w1 in ((0.0, 1.0 - p1), (1.0, p1)):
        if w1 == 0.0:
            continue
        if spec.x2_law is None or spec.x2_law[0] == "bernoulli":
            atoms = ((0.0, 1.0),) if spec.x2_law is None else (
                (0.0, 1.0 - spec.x2_law[1]),
                (1.0, spec.x2_law[1]),
            )
            for x2v, w2 in atoms:
                tau_here = float(spec.tau(np.asarray([x1v]), np.asarray([x2v]))[0])
                sign = 0 if tau_here == 0.0 else (1 if tau_here > 0 else -1)
                parts = accumulate(w1 * w2, x1v, np.asarray([x2v]), sign)
                for key, part in zip(("h", "h2", "reg", "tie"), parts):
                    acc[key] += float(part[0])
        else:
            lo_law, hi_law = spec.x2_law[1], spec.x2_law[2]
            density = 1.0 / (hi_law - lo_law)
            for seg_lo, seg_hi, sign in spec.sign_segments(x1v):
                for key, pick in zip(("h", "h2", "reg", "tie"), range(4)):
                    acc[key] += _adaptive_quadrature(
                        lambda u, pick=pick, sign=sign: accumulate(w1 * density, x1v, u, sign)[pick],
                        seg_lo,
                        seg_hi,
                    )
    return acc["h2"] - acc["h"] ** 2 + acc["reg"] + acc["tie"]


def _parse_method(token: str):
    tok = token.strip()
    if tok.startswith("smoothing"):
        inner = tok[len("smoothing"):]
        if inner == "":
            return "smoothing", 0.5, tok
        if inner.startswith("(") and inner.endswith(")"):
            try:
                t0 = float(inner[1:-1])
            except ValueError:
                raise AnalysisError("unknown-method", f"bad smoothing center in {token!r}") from None
            if not (0.0 < t0 < 1.0):
                raise AnalysisError("unknown-method", f"smoothing center must lie in (0, 1), got {t0}")
            return "smoothing", t0, tok
        raise AnalysisError("unknown-method", f"unknown method {token!r}")
    if tok in ("adaptive", "sss", "subbagging", "oracle", "plugin"):
        return tok, None, tok
    raise AnalysisError("unknown-method", f"unknown method {token!r}")


def _mc_rep(args):
    (spec_id, n, tokens, master_seed, r, tc, cfg, sub, alpha, clamp) = args
    spec = SCENARIOS[spec_id]
    ds = generate_scenario(spec, n, derive_seed(master_seed, "replication-data", r))
    plan_seed = derive_seed(master_seed, "replication-plan", r)
    out = {}
    for token in tokens:
        name, t0, label = _parse_method(token)
        try:
            if name == "adaptive":
                est = adaptive_smoothing_value(ds, make_fold_plan(n, plan_seed), tc, cfg, clamp)
            elif name == "smoothing":
                plan = make_fold_plan(n, plan_seed)
                _, hs = tune_bandwidths(ds, plan, tc, cfg)
                est = smoothing_value(ds, plan, SmoothingParams(h1=hs[1], h2=hs[2], t0=t0), cfg)
            elif name == "sss":
                est = sss_value(ds, derive_seed(master_seed, "replication-split", r), cfg)
            elif name == "subbagging":
                est = subbagging_value(ds, sub, derive_seed(master_seed, "replication-subbag", r), cfg)
            elif name == "oracle":
                est = oracle_value(ds, spec)
            else:
                est = plug_in_value(ds, make_fold_plan(n, plan_seed), cfg)
            lo, hi = confidence_interval(est, alpha)
            out[label] = (est.value, est.sigma, lo, hi, None)
        except AnalysisError as exc:
            out[label] = (math.nan, math.nan, math.nan, math.nan, exc.code)
    return r, out


@dataclass(frozen=True)
class MethodSummary:
    """Aggregates for one method over the successful replications."""

    ecp: float | None
    al: float | None
    mean: float | None
    sd: float | None
    mean_sigma: float | None
    failures: int
    quantiles: dict

    def to_dict(self):
        return {
            "ecp": self.ecp,
            "al": self.al,
            "mean": self.mean,
            "sd": self.sd,
            "mean_sigma": self.mean_sigma,
            "failures": self.failures,
            "quantiles": dict(self.quantiles),
        }


@dataclass(frozen=True)
class McReport:
    """Coverage study result: one summary per requested method."""

    scenario: str
    n: int
    reps: int
    master_seed: int
    alpha: float
    true_value: float
    methods: dict

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "n": self.n,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "alpha": self.alpha,
            "true_value": self.true_value,
            "methods": {name: s.to_dict() for name, s in self.methods.items()},
        }


def _summarize(values, sigmas, los, his, v0):
    ok = np.isfinite(values)
    failures = int((~ok).sum())
    if ok.sum() == 0:
        return MethodSummary(None, None, None, None, None, failures, {})
    vals = values[ok]
    covered = (los[ok] <= v0) & (v0 <= his[ok])
    quants = {
        f"p{int(round(p * 1000)):03d}": float(q)
        for p, q in zip(_QUANTILE_PROBS, np.quantile(vals, _QUANTILE_PROBS))
    }
    return MethodSummary(
        ecp=float(covered.mean()),
        al=float((his[ok] - los[ok]).mean()),
        mean=float(vals.mean()),
        sd=float(np.std(vals, ddof=1)) if ok.sum() > 1 else None,
        mean_sigma=float(sigmas[ok].mean()),
        failures=failures,
        quantiles=quants,
    )


def run_monte_carlo(
    spec_or_id,
    n: int,
    reps: int,
    methods,
    master_seed: int = 0,
    tc: TuningConfig | None = None,
    cfg: NuisanceConfig | None = None,
    alpha: float = 0.05,
    jobs: int = 1,
    sub: SubbaggingConfig | None = None,
    t0_clamp: tuple = (0.05, 0.95),
) -> McReport:
    """Score the requested methods over independent replications.

    Per replication, every method sees the same dataset and fold-plan seed,
    so comparisons are paired.  Failed replications are excluded from a
    method's aggregates and counted, never retried.
    """
    spec = _scenario(spec_or_id)
    if reps < 1:
        raise AnalysisError("bad-config", "need at least one replication")
    tokens = [_parse_method(m)[2] for m in methods]
    if len(set(tokens)) != len(tokens):
        raise AnalysisError("bad-config", "duplicate method requested")
    tc = tc if tc is not None else TuningConfig(C=0.05)
    cfg = cfg if cfg is not None else NuisanceConfig(family=spec.family)
    sub = sub if sub is not None else SubbaggingConfig()
    tasks = [
        (spec.id, n, tuple(tokens), master_seed, r, tc, cfg, sub, alpha, t0_clamp)
        for r in range(reps)
    ]
    per_rep = [None] * reps
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r, out in pool.map(_mc_rep, tasks, chunksize=max(1, reps // (4 * jobs))):
                per_rep[r] = out
    else:
        for task in tasks:
            r, out = _mc_rep(task)
            per_rep[r] = out
    summaries = {}
    for label in tokens:
        rows = np.array([per_rep[r][label][:4] for r in range(reps)], dtype=float)
        summaries[label] = _summarize(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], spec.v0)
    return McReport(
        scenario=spec.id,
        n=n,
        reps=reps,
        master_seed=master_seed,
        alpha=alpha,
        true_value=spec.v0,
        methods=summaries,
    )


_CSV_FIELDS = ("scenario", "n", "reps", "master_seed", "method", "ecp", "al", "mean", "sd", "mean_sigma", "failures")


def report_to_csv(report) -> str:
    """One CSV row per method; accepts an McReport or its dict form."""
    data = report.to_dict() if isinstance(report, McReport) else report
    lines = [",".join(_CSV_FIELDS)]
    for name, s in data["methods"].items():
        row = [data["scenario"], data["n"], data["reps"], data["master_seed"], name,
               s["ecp"], s["al"], s["mean"], s["sd"], s["mean_sigma"], s["failures"]]
        lines.append(",".join("" if v is None else str(v) for v in row))
    return "\n".join(lines) + "\n"


def toy_example_report(n: int, reps: int, seed: int, tc: TuningConfig | None = None) -> dict:
    """Bias comparison on the two-group trial: full-sample plug-in against
    the adaptive estimator, with quantiles of the replicated estimates."""
    spec = SCENARIOS["toy"]
    if n % 2 or n < 8:
        raise AnalysisError("bad-config", "toy sample size must be even and at least 8")
    tc = tc if tc is not None else TuningConfig(C=0.05)
    cfg = NuisanceConfig(family="frequency")
    collected = {"in_sample_plugin": [], "adaptive": []}
    failures = {"in_sample_plugin": 0, "adaptive": 0}
    for r in range(reps):
        ds = generate_scenario(spec, n, derive_seed(seed, "toy-data", r))
        try:
            collected["in_sample_plugin"].append(insample_plugin_value(ds).value)
        except AnalysisError:
            failures["in_sample_plugin"] += 1
        try:
            plan = make_fold_plan(n, derive_seed(seed, "toy-plan", r))
            collected["adaptive"].append(adaptive_smoothing_value(ds, plan, tc, cfg).value)
        except AnalysisError:
            failures["adaptive"] += 1
    out = {"scenario": "toy", "n": n, "reps": reps, "seed": seed, "true_value": spec.v0, "methods": {}}
    for name, vals in collected.items():
        arr = np.asarray(vals)
        entry = {"failures": failures[name]}
        if len(arr):
            entry["mean"] = float(arr.mean())
            entry["bias"] = float(arr.mean() - spec.v0)
            entry["quantiles"] = {
                f"p{int(round(p * 1000)):03d}": float(q)
                for p, q in zip(_QUANTILE_PROBS, np.quantile(arr, _QUANTILE_PROBS))
            }
        out["methods"][name] = entry
    return out


def toy_report_to_csv(report: dict) -> str:
    head = ["method", "mean", "bias"] + [f"p{int(round(p * 1000)):03d}" for p in _QUANTILE_PROBS] + ["failures"]
    lines = [",".join(head)]
    for name, entry in report["methods"].items():
        row = [name, entry.get("mean"), entry.get("bias")]
        row += [entry.get("quantiles", {}).get(k) for k in head[3:-1]]
        row.append(entry.get("failures"))
        lines.append(",".join("" if v is None else str(v) for v in row))
    return "\n".join(lines) + "\n"
