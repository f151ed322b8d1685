"""HTTP surface over the estimators; the CLI is one of its clients.

Every endpoint is stateless and deterministic given its request body, so
deploying behind a load balancer needs no coordination.  Domain failures map
to HTTP 400 with a stable machine-readable error code.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__
from .baselines import SubbaggingConfig, sss_value, subbagging_value
from .core import AnalysisError, Dataset, derive_seed, make_fold_plan
from .estimator import TuningConfig, confidence_interval, plug_in_value, repeated_cross_fit, tune_bandwidths
from .nuisance import NuisanceConfig
from .schemas import (
    EstimateRequest,
    EstimateResponse,
    SimulateRequest,
    SimulateResponse,
    ToyRequest,
    TuneRequest,
    TuneResponse,
)
from .sim import SCENARIOS, run_monte_carlo, toy_example_report

app = FastAPI(title="otrvalue", version=__version__)


@app.exception_handler(AnalysisError)
async def _analysis_error(request, exc: AnalysisError):
    return JSONResponse(status_code=400, content={"error": {"code": exc.code, "message": exc.message}})


def _dataset(payload) -> Dataset:
    return Dataset(
        x=np.asarray(payload.x, dtype=float),
        a=np.asarray(payload.a, dtype=int),
        y=np.asarray(payload.y, dtype=float),
    )


def _nuisance_config(opts) -> NuisanceConfig:
    return NuisanceConfig(
        family=opts.family,
        spline_df=opts.spline_df,
        truncation=tuple(opts.truncation),
        interaction_with_first_covariate=opts.interaction_with_first_covariate,
    )


def _subbagging_config(opts) -> SubbaggingConfig:
    return SubbaggingConfig(subsample_exponent=opts.subsample_exponent, b=opts.b, k0=opts.k0)


@app.get("/health")
async def health():
    return {"status": "ok", "version": __version__}


@app.post("/estimate", response_model=EstimateResponse)
async def estimate(req: EstimateRequest):
    ds = _dataset(req.data)
    cfg = _nuisance_config(req.nuisance)
    clamp = (req.clamp, 1.0 - req.clamp)
    if req.method == "adaptive":
        est = repeated_cross_fit(ds, req.repeats, req.seed, TuningConfig(C=req.C), cfg, clamp)
    elif req.method == "sss":
        est = sss_value(ds, req.seed, cfg)
    elif req.method == "subbagging":
        est = subbagging_value(ds, _subbagging_config(req.subbagging), req.seed, cfg)
    else:
        est = plug_in_value(ds, make_fold_plan(ds.n, derive_seed(req.seed, "fold-plan")), cfg)
    lo, hi = confidence_interval(est, req.alpha)
    return EstimateResponse(
        estimate=est.value,
        sigma=est.sigma,
        n=est.n,
        ci_low=lo,
        ci_high=hi,
        ci_length=hi - lo,
        method="adaptive_smoothing" if req.method == "adaptive" else est.method,
        alpha=req.alpha,
        seed=req.seed,
        config={
            "C": req.C,
            "repeats": req.repeats,
            "clamp": req.clamp,
            "nuisance": req.nuisance.model_dump(),
        },
    )


@app.post("/tune", response_model=TuneResponse)
async def tune(req: TuneRequest):
    ds = _dataset(req.data)
    plan = make_fold_plan(ds.n, derive_seed(req.seed, "fold-plan"))
    eaes, hs = tune_bandwidths(ds, plan, TuningConfig(C=req.C), _nuisance_config(req.nuisance))
    return TuneResponse(eae_1=eaes[1], eae_2=eaes[2], h_1=hs[1], h_2=hs[2], n=ds.n, C=req.C, seed=req.seed)


@app.post("/simulate", response_model=SimulateResponse)
async def simulate(req: SimulateRequest):
    nuisance = req.nuisance
    cfg = _nuisance_config(nuisance) if nuisance is not None else NuisanceConfig(
        family=SCENARIOS[req.scenario].family
    )
    report = run_monte_carlo(
        req.scenario,
        req.n,
        req.reps,
        req.methods,
        master_seed=req.seed,
        tc=TuningConfig(C=req.C),
        cfg=cfg,
        alpha=req.alpha,
        jobs=req.jobs,
        sub=_subbagging_config(req.subbagging),
        t0_clamp=(req.clamp, 1.0 - req.clamp),
    )
    return SimulateResponse(**report.to_dict())


@app.post("/toy")
async def toy(req: ToyRequest):
    return toy_example_report(req.n, req.reps, req.seed)
