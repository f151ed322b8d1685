"""Request and response models for the HTTP service."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class DataPayload(BaseModel):
    """Inline dataset: covariate rows with aligned treatment and outcome."""

    x: list[list[float]]
    a: list[int]
    y: list[float]


class NuisanceOptions(BaseModel):
    family: Literal["frequency", "spline"] = "spline"
    spline_df: int = 6
    truncation: tuple[float, float] = (0.05, 0.95)
    interaction_with_first_covariate: bool = True


class SubbaggingOptions(BaseModel):
    subsample_exponent: float = 0.8
    b: int = 200
    k0: Optional[int] = None


class EstimateRequest(BaseModel):
    data: DataPayload
    method: Literal["adaptive", "sss", "subbagging", "plugin"] = "adaptive"
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    C: float = Field(default=0.01, gt=0.0)
    repeats: int = Field(default=10, ge=1)
    seed: int = 0
    clamp: float = Field(default=0.05, gt=0.0, lt=0.5)
    nuisance: NuisanceOptions = NuisanceOptions()
    subbagging: SubbaggingOptions = SubbaggingOptions()


class EstimateResponse(BaseModel):
    estimate: float
    sigma: float
    n: int
    ci_low: float
    ci_high: float
    ci_length: float
    method: str
    alpha: float
    seed: int
    config: dict


class TuneRequest(BaseModel):
    data: DataPayload
    C: float = Field(default=0.01, gt=0.0)
    seed: int = 0
    nuisance: NuisanceOptions = NuisanceOptions()


class TuneResponse(BaseModel):
    eae_1: float
    eae_2: float
    h_1: float
    h_2: float
    n: int
    C: float
    seed: int


class SimulateRequest(BaseModel):
    scenario: Literal["A", "B", "C", "D", "E"]
    n: int = Field(default=1000, ge=8)
    reps: int = Field(default=500, ge=1)
    methods: list[str] = ["adaptive"]
    seed: int = 0
    C: float = Field(default=0.05, gt=0.0)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    jobs: int = Field(default=1, ge=1)
    clamp: float = Field(default=0.05, gt=0.0, lt=0.5)
    nuisance: Optional[NuisanceOptions] = None
    subbagging: SubbaggingOptions = SubbaggingOptions()


class MethodSummaryModel(BaseModel):
    ecp: Optional[float] = None
    al: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    mean_sigma: Optional[float] = None
    failures: int = 0
    quantiles: dict[str, float] = {}


class SimulateResponse(BaseModel):
    scenario: str
    n: int
    reps: int
    master_seed: int
    alpha: float
    true_value: float
    methods: dict[str, MethodSummaryModel]


class ToyRequest(BaseModel):
    n: int = Field(default=400, ge=8)
    reps: int = Field(default=2000, ge=1)
    seed: int = 0


class ErrorBody(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody
