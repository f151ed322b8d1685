"""Confidence intervals for the mean outcome under an estimated optimal
treatment rule, built on cross-fitted doubly robust scores with an
adaptively smoothed decision."""

__version__ = "0.1.0"

from .baselines import (
    SubbaggingConfig,
    aggregate_subbag_decision,
    insample_plugin_value,
    oracle_value,
    sss_value,
    subbagging_value,
)
from .core import (
    AnalysisError,
    Dataset,
    Estimate,
    FoldPlan,
    Observation,
    ValidationReport,
    derive_rng,
    derive_seed,
    make_fold_plan,
    standard_normal_quantile,
    validate_dataset,
)
from .dataio import CsvSchema, load_dataset
from .estimator import (
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
from .nuisance import NuisanceConfig, OutcomeFit, PropensityFit, fit_outcome, fit_propensity, spline_basis
from .sim import (
    SCENARIOS,
    McReport,
    MethodSummary,
    ScenarioSpec,
    SimulatedDataset,
    analytic_asymptotic_variance,
    generate_scenario,
    report_to_csv,
    run_monte_carlo,
    toy_example_report,
    toy_report_to_csv,
    true_value,
)

__all__ = [
    "__version__",
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
    "NuisanceConfig",
    "PropensityFit",
    "OutcomeFit",
    "spline_basis",
    "fit_propensity",
    "fit_outcome",
    "SmoothingParams",
    "TuningConfig",
    "psi",
    "smooth_decision",
    "plug_in_value",
    "estimate_approx_error",
    "select_bandwidth",
    "tune_bandwidths",
    "smoothing_value",
    "adaptive_smoothing_value",
    "confidence_interval",
    "repeated_cross_fit",
    "SubbaggingConfig",
    "sss_value",
    "subbagging_value",
    "aggregate_subbag_decision",
    "insample_plugin_value",
    "oracle_value",
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
    "CsvSchema",
    "load_dataset",
]
