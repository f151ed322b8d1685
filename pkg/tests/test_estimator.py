"""Influence scores, smoothing decisions, bandwidth tuning, and the
cross-fitted estimators, checked against hand-computable constructions."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import otrvalue as ov
from otrvalue.core import AnalysisError, Dataset, Estimate, derive_rng, derive_seed, make_fold_plan
from otrvalue.estimator import (
    SmoothingParams,
    TuningConfig,
    adaptive_smoothing_value,
    confidence_interval,
    estimate_approx_error,
    plug_in_value,
    psi,
    repeated_cross_fit,
    select_bandwidth,
    smooth_decision,
    smoothing_value,
    tune_bandwidths,
)
from otrvalue.nuisance import NuisanceConfig, OutcomeFit, PropensityFit, fit_outcome, fit_propensity

FREQ = NuisanceConfig(family="frequency")


def _stub_fits(p1, mu1, mu0):
    pf = PropensityFit(predict=lambda x: p1, trained_on=np.arange(1), truncation=(0.05, 0.95))
    of = OutcomeFit(
        predict=lambda arm, x: mu1 if arm == 1 else mu0,
        contrast=lambda x: mu1 - mu0,
        trained_on=np.arange(1),
    )
    return pf, of


def _psi_reference(y, a, d, p1, mu1, mu0):
    pi_obs = np.where(a == 1, p1, 1.0 - p1)
    mu_obs = np.where(a == 1, mu1, mu0)
    w = np.where(a == 1, d, 1.0 - d)
    return w / pi_obs * (y - mu_obs) + d * mu1 + (1.0 - d) * mu0


def test_psi_treated_with_zero_outcome_model():
    pf, of = _stub_fits(0.5, 0.0, 0.0)
    obs = ov.Observation(x=[0.0], a=1, y=2.0)
    assert psi(obs, 1.0, pf, of) == pytest.approx(4.0)


def test_psi_control_with_zero_residual():
    pf, of = _stub_fits(0.8, 3.0, 1.0)
    obs = ov.Observation(x=[0.0], a=0, y=1.0)
    assert psi(obs, 0.5, pf, of) == pytest.approx(2.0)


def test_psi_rejects_decision_outside_unit_interval():
    pf, of = _stub_fits(0.5, 0.0, 0.0)
    obs = ov.Observation(x=[0.0], a=1, y=2.0)
    for d in (-0.1, 1.1):
        with pytest.raises(AnalysisError):
            psi(obs, d, pf, of)


def test_psi_agrees_with_vectorized_formula():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p1 = rng.uniform(0.1, 0.9)
        mu1, mu0 = rng.normal(size=2)
        pf, of = _stub_fits(p1, mu1, mu0)
        a = int(rng.integers(0, 2))
        y = float(rng.normal())
        d = float(rng.uniform())
        want = _psi_reference(np.array([y]), np.array([a]), d, p1, mu1, mu0)[0]
        assert psi(ov.Observation(x=[0.0], a=a, y=y), d, pf, of) == pytest.approx(want)


def _scenario_a_draws(n, rng):
    x1 = (rng.random(n) < 0.4).astype(float)
    pi = 0.7 + 0.1 * x1
    a = (rng.random(n) < pi).astype(int)
    y = 0.3 + a * 0.4 * x1 + rng.normal(0.0, 0.5, n)
    return x1, pi, a, y


def test_double_robustness_wrong_propensity():
    rng = derive_rng(133, "dr-check", 0)
    x1, _, a, y = _scenario_a_draws(1_000_000, rng)
    mu1, mu0 = 0.3 + 0.4 * x1, np.full_like(x1, 0.3)
    scores = _psi_reference(y, a, 1.0, 0.3, mu1, mu0)
    target = 0.46
    se = scores.std(ddof=1) / math.sqrt(len(scores))
    assert abs(scores.mean() - target) < 3 * se


def test_double_robustness_wrong_outcome_model():
    rng = derive_rng(133, "dr-check", 1)
    x1, pi, a, y = _scenario_a_draws(1_000_000, rng)
    mu1, mu0 = np.full_like(x1, -1.5), np.full_like(x1, -1.7)
    scores = _psi_reference(y, a, 1.0, pi, mu1, mu0)
    target = 0.46
    se = scores.std(ddof=1) / math.sqrt(len(scores))
    assert abs(scores.mean() - target) < 3 * se


def test_double_robustness_fractional_decision():
    rng = derive_rng(133, "dr-check", 2)
    x1, _, a, y = _scenario_a_draws(1_000_000, rng)
    d = 0.3 + 0.4 * x1
    mu1, mu0 = 0.3 + 0.4 * x1, np.full_like(x1, 0.3)
    scores = _psi_reference(y, a, d, 0.55, mu1, mu0)
    # E[d*mu1 + (1-d)*mu0] = 0.4*(0.7*0.7 + 0.3*0.3) + 0.6*0.3
    target = 0.412
    se = scores.std(ddof=1) / math.sqrt(len(scores))
    assert abs(scores.mean() - target) < 3 * se


def test_smooth_decision_examples():
    assert smooth_decision(0.0, 1.0, 0.3) == pytest.approx(0.3)
    assert smooth_decision(0.7 * 2.0, 2.0, 0.3) == pytest.approx(1.0)
    assert smooth_decision(-0.3 * 2.0, 2.0, 0.3) == pytest.approx(0.0)
    assert smooth_decision(0.5, 2.0, 0.5) == pytest.approx(0.75)


def test_smooth_decision_rejects_bad_inputs():
    with pytest.raises(AnalysisError):
        smooth_decision(0.0, 0.0, 0.5)
    with pytest.raises(AnalysisError):
        smooth_decision(0.0, -1.0, 0.5)
    with pytest.raises(AnalysisError):
        smooth_decision(0.0, 1.0, 0.0)
    with pytest.raises(AnalysisError):
        smooth_decision(0.0, 1.0, 1.0)


def test_smooth_decision_vector_center():
    tau = np.array([-5.0, 0.0, 5.0])
    t0 = np.array([0.2, 0.4, 0.6])
    out = smooth_decision(tau, 1.0, t0)
    assert np.allclose(out, [0.0, 0.4, 1.0])


@settings(max_examples=300, deadline=None)
@given(
    tau=st.floats(min_value=-100, max_value=100),
    step=st.floats(min_value=0, max_value=10),
    h=st.floats(min_value=1e-3, max_value=50),
    t0=st.floats(min_value=0.01, max_value=0.99),
)
def test_smooth_decision_shape_properties(tau, step, h, t0):
    lo = smooth_decision(tau, h, t0)
    hi = smooth_decision(tau + step, h, t0)
    assert 0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0
    assert hi >= lo
    assert hi - lo <= step / h + 1e-9
    assert smooth_decision(0.0, h, t0) == pytest.approx(t0)


def _plan_aligned_dataset(seed=5, y=None):
    """n=16 dataset whose treatment is balanced inside every quarter of the
    plan drawn with the same seed, making every fitted cell rate exactly 1/2."""
    plan = make_fold_plan(16, seed)
    x = np.zeros(16)
    a = np.zeros(16, dtype=int)
    for jk in plan.quarters:
        q = plan.quarters[jk]
        x[q] = [0.0, 0.0, 1.0, 1.0]
        a[q] = [0, 1, 0, 1]
    if y is None:
        y = np.arange(16, dtype=float) / 7.0
    return Dataset(x=x, a=a, y=np.asarray(y, dtype=float)), plan


def test_plug_in_with_always_positive_contrast():
    ds, plan = _plan_aligned_dataset()
    ds = Dataset(x=ds.x, a=ds.a, y=ds.a * (1.0 + ds.x[:, 0]) + ds.x[:, 0])
    est = plug_in_value(ds, plan, FREQ)
    # zero residuals and d == 1 everywhere: the estimate is E[mu-hat(1, X)]
    assert est.value == pytest.approx(float(np.mean(1.0 + 2.0 * ds.x[:, 0])), abs=1e-12)
    assert est.method == "plugin"


def test_plug_in_covers_in_regular_scenario(mc_scenario_b):
    assert 0.92 <= mc_scenario_b.methods["plugin"].ecp <= 0.98


def test_eae_zero_for_coincident_fits():
    ds, plan = _plan_aligned_dataset()
    ds = Dataset(x=np.zeros(16), a=ds.a, y=ds.a * 1.0)
    assert estimate_approx_error(ds, plan, 1, FREQ) == pytest.approx(0.0, abs=1e-15)


def test_eae_constant_offset_gives_delta_squared():
    ds, plan = _plan_aligned_dataset()
    delta, t1 = 0.6, 0.9
    y = np.zeros(16)
    for idx in plan.half(1):
        y[idx] = ds.a[idx] * t1
    for k in (1, 2):
        for idx in plan.quarters[(2, k)]:
            y[idx] = ds.a[idx] * (t1 + delta)
    ds2 = Dataset(x=np.zeros(16), a=ds.a, y=y)
    assert estimate_approx_error(ds2, plan, 1, FREQ) == pytest.approx(delta ** 2)


def test_eae_median_shrinks_with_n():
    meds = {}
    for n in (1000, 4000):
        vals = []
        for r in range(50):
            ds = ov.generate_scenario("A", n, derive_seed(111, "replication-data", r))
            plan = make_fold_plan(n, derive_seed(111, "replication-plan", r))
            vals.append(estimate_approx_error(ds, plan, 1, FREQ))
        meds[n] = float(np.median(vals))
    assert meds[4000] < meds[1000]


def test_eae_rejects_bad_half_index():
    ds, plan = _plan_aligned_dataset()
    with pytest.raises(AnalysisError):
        estimate_approx_error(ds, plan, 3, FREQ)


def test_select_bandwidth_floor_branch():
    tc = TuningConfig(C=0.05)
    n = 55
    floor = math.log(n) / (0.05 * n)
    want = 0.05 * math.log(n) * n ** 0.25 * floor ** 0.75
    assert select_bandwidth(0.0, n, tc) == pytest.approx(want)


def test_select_bandwidth_plain_formula():
    assert select_bandwidth(1.0, 16, TuningConfig(C=1.0)) == pytest.approx(2.0 * math.log(16))


def test_select_bandwidth_scaling_in_constant():
    # with the error term dominant h is linear in C; on the floor branch the
    # C inside the floor cancels three quarters of the outer factor
    big, small = TuningConfig(C=0.05), TuningConfig(C=0.01)
    assert select_bandwidth(5.0, 1000, big) / select_bandwidth(5.0, 1000, small) == pytest.approx(5.0)
    assert select_bandwidth(0.0, 1000, big) / select_bandwidth(0.0, 1000, small) == pytest.approx(5.0 ** 0.25)


def test_select_bandwidth_rejects_bad_inputs():
    with pytest.raises(AnalysisError):
        select_bandwidth(-1.0, 100, TuningConfig(C=0.05))
    with pytest.raises(AnalysisError):
        select_bandwidth(1.0, 7, TuningConfig(C=0.05))


@settings(max_examples=100, deadline=None)
@given(eae=st.floats(min_value=0, max_value=100), n=st.integers(min_value=8, max_value=10**6))
def test_select_bandwidth_strictly_positive(eae, n):
    assert select_bandwidth(eae, n, TuningConfig(C=0.05)) > 0


def test_tune_falls_back_to_floor_on_degenerate_quarter():
    plan = make_fold_plan(16, 5)
    x = np.zeros(16)
    a = np.zeros(16, dtype=int)
    for jk in plan.quarters:
        q = plan.quarters[jk]
        a[q] = [1, 1, 1, 1] if jk == (2, 1) else [0, 1, 0, 1]
    rng = np.random.default_rng(6)
    ds = Dataset(x=x, a=a, y=rng.normal(size=16))
    tc = TuningConfig(C=0.05)
    eaes, hs = tune_bandwidths(ds, plan, tc, FREQ)
    assert eaes[1] == 0.0
    assert hs[1] == pytest.approx(select_bandwidth(0.0, 16, tc))
    assert hs[2] > 0


def test_adaptive_equals_fixed_center_under_balanced_propensity():
    ds, plan = _plan_aligned_dataset()
    tc = TuningConfig(C=0.05)
    _, hs = tune_bandwidths(ds, plan, tc, FREQ)
    fixed = smoothing_value(ds, plan, SmoothingParams(h1=hs[1], h2=hs[2], t0=0.5), FREQ)
    adaptive = adaptive_smoothing_value(ds, plan, tc, FREQ, h_override=(hs[1], hs[2]))
    assert adaptive.value == pytest.approx(fixed.value, abs=1e-14)
    assert adaptive.sigma == pytest.approx(fixed.sigma, abs=1e-14)
    assert adaptive.method == "adaptive_smoothing"


def test_vanishing_bandwidth_recovers_plug_in():
    ds, plan = _plan_aligned_dataset()
    ds = Dataset(x=ds.x, a=ds.a, y=ds.a * (1.0 + ds.x[:, 0]) + ds.x[:, 0])
    hard = plug_in_value(ds, plan, FREQ)
    soft = smoothing_value(ds, plan, SmoothingParams(h1=1e-9, h2=1e-9, t0=0.5), FREQ)
    assert soft.value == pytest.approx(hard.value, abs=1e-6)


def _reference_smoothing(ds, plan, params, cfg):
    h = {1: params.h1, 2: params.h2}
    chunks = []
    for j, k in ((1, 1), (1, 2), (2, 1), (2, 2)):
        q = plan.quarters[(j, k)]
        other = 3 - j
        tau = fit_outcome(ds, plan.half(other), cfg).contrast(ds.x[q])
        d = smooth_decision(tau, h[other], params.t0)
        comp = plan.quarter_complement(j, k)
        of = fit_outcome(ds, comp, cfg)
        pf = fit_propensity(ds, comp, cfg)
        chunks.append(
            _psi_reference(
                ds.y[q], ds.a[q], d, pf.predict(ds.x[q]), of.predict(1, ds.x[q]), of.predict(0, ds.x[q])
            )
        )
    value = sum(float(c.mean()) for c in chunks) / 4.0
    pooled = np.concatenate(chunks)
    sigma = math.sqrt(float(((pooled - value) ** 2).sum()) / (len(pooled) - 1))
    return value, sigma, pooled


def _alternating_dataset(n, seed):
    plan = make_fold_plan(n, seed)
    x = np.zeros(n)
    a = np.zeros(n, dtype=int)
    for jk in plan.quarters:
        q = plan.quarters[jk]
        pattern_x = [0.0, 0.0, 1.0, 1.0, 0.0][: len(q)]
        pattern_a = [0, 1, 0, 1, 0][: len(q)]
        x[q] = pattern_x
        a[q] = pattern_a
    rng = np.random.default_rng(seed + 70)
    return Dataset(x=x, a=a, y=rng.normal(size=n)), plan


def test_quarter_weighted_average_equal_sizes():
    ds, plan = _alternating_dataset(16, 9)
    params = SmoothingParams(h1=0.5, h2=0.5, t0=0.5)
    est = smoothing_value(ds, plan, params, FREQ)
    value, sigma, pooled = _reference_smoothing(ds, plan, params, FREQ)
    assert est.value == pytest.approx(value, abs=1e-12)
    assert est.sigma == pytest.approx(sigma, abs=1e-12)
    # equal quarters make the weighted average collapse to the grand mean
    assert est.value == pytest.approx(float(pooled.mean()), abs=1e-12)


def test_quarter_weighted_average_unequal_sizes():
    ds, plan = _alternating_dataset(18, 9)
    params = SmoothingParams(h1=0.5, h2=0.5, t0=0.5)
    est = smoothing_value(ds, plan, params, FREQ)
    value, sigma, pooled = _reference_smoothing(ds, plan, params, FREQ)
    assert est.value == pytest.approx(value, abs=1e-12)
    assert est.sigma == pytest.approx(sigma, abs=1e-12)
    assert est.value != pytest.approx(float(pooled.mean()), abs=1e-12)


def test_smoothing_value_requires_fixed_center():
    ds, plan = _plan_aligned_dataset()
    with pytest.raises(AnalysisError):
        smoothing_value(ds, plan, SmoothingParams(h1=0.5, h2=0.5, t0=None), FREQ)


def test_confidence_interval_degenerate_sigma():
    est = Estimate(value=1.2, sigma=0.0, n=100, method="x")
    lo, hi = confidence_interval(est, 0.05)
    assert lo == hi == pytest.approx(1.2)


def test_confidence_interval_width_formula():
    est = Estimate(value=0.4, sigma=0.7, n=250, method="x")
    lo, hi = confidence_interval(est, 0.05)
    z = ov.standard_normal_quantile(0.025)
    assert hi - lo == pytest.approx(2 * z * 0.7 / math.sqrt(250))
    assert (lo + hi) / 2 == pytest.approx(0.4)


def test_confidence_interval_reference_width():
    est = Estimate(value=0.46, sigma=0.5598, n=1000, method="x")
    lo, hi = confidence_interval(est, 0.05)
    assert round(hi - lo, 4) == 0.0694


def test_confidence_interval_narrows_with_alpha():
    est = Estimate(value=0.0, sigma=1.0, n=100, method="x")
    w05 = np.diff(confidence_interval(est, 0.05))[0]
    w10 = np.diff(confidence_interval(est, 0.10))[0]
    assert w10 < w05


def test_confidence_interval_rejects_bad_alpha():
    est = Estimate(value=0.0, sigma=1.0, n=100, method="x")
    for alpha in (0.0, 1.0, -0.5):
        with pytest.raises(AnalysisError):
            confidence_interval(est, alpha)


def test_repeated_cross_fit_deterministic():
    ds = ov.generate_scenario("A", 200, 31)
    tc = TuningConfig(C=0.05)
    a = repeated_cross_fit(ds, 3, 77, tc, FREQ)
    b = repeated_cross_fit(ds, 3, 77, tc, FREQ)
    assert a == b


def test_repeated_cross_fit_single_repeat_matches_one_run():
    ds = ov.generate_scenario("A", 200, 32)
    tc = TuningConfig(C=0.05)
    combined = repeated_cross_fit(ds, 1, 55, tc, FREQ)
    plan = make_fold_plan(200, derive_seed(55, "cross-fit-repeat", 0))
    single = adaptive_smoothing_value(ds, plan, tc, FREQ)
    assert combined.value == pytest.approx(single.value)
    assert combined.sigma == pytest.approx(single.sigma)


def test_repeated_cross_fit_rejects_zero_repeats():
    ds = ov.generate_scenario("A", 200, 33)
    with pytest.raises(AnalysisError):
        repeated_cross_fit(ds, 0, 1, TuningConfig(C=0.05), FREQ)


def test_repeat_averaging_changes_coverage_little():
    tc = TuningConfig(C=0.05)
    z = ov.standard_normal_quantile(0.025)
    covered = {1: 0, 10: 0}
    for r in range(200):
        ds = ov.generate_scenario("A", 1000, derive_seed(141, "replication-data", r))
        for repeats in (1, 10):
            est = repeated_cross_fit(ds, repeats, derive_seed(141, "replication-plan", r), tc, FREQ)
            half = z * est.sigma / math.sqrt(est.n)
            covered[repeats] += est.value - half <= 0.46 <= est.value + half
    assert abs(covered[1] - covered[10]) / 200 < 0.02


def test_params_validation():
    with pytest.raises(AnalysisError):
        SmoothingParams(h1=0.0, h2=1.0)
    with pytest.raises(AnalysisError):
        SmoothingParams(h1=1.0, h2=1.0, t0=1.5)
    with pytest.raises(AnalysisError):
        SmoothingParams(h1=1.0, h2=1.0, t0_clamp=(0.6, 0.9))
    with pytest.raises(AnalysisError):
        TuningConfig(C=0.0)
    with pytest.raises(AnalysisError):
        adaptive_smoothing_value(
            *_plan_aligned_dataset(), TuningConfig(C=0.05), FREQ, h_override=(0.0, 1.0)
        )
