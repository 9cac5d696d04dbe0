"""Pydantic schemas for calculation inputs and reports."""

from __future__ import annotations

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Measure = Literal["cal_slope", "c_stat", "brier", "mape", "cal_in_large"]
MEASURES: tuple[Measure, ...] = ("cal_slope", "c_stat", "brier", "mape", "cal_in_large")
Method = Literal["analytic", "simulation", "both"]


class FitMethod(str, Enum):
    """How each simulated development sample is fitted."""

    MLE = "mle"
    MLE_LSF = "mle_lsf"


class TrueModelSpec(BaseModel):
    """Assumed true model: prevalence, C-statistic and predictor count."""

    model_config = ConfigDict(frozen=True)

    prevalence: float
    c_stat: float
    n_predictors: int

    @field_validator("prevalence")
    @classmethod
    def _check_prevalence(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("prevalence must be in (0,1)")
        return value

    @field_validator("c_stat")
    @classmethod
    def _check_c_stat(cls, value: float) -> float:
        if value <= 0.5:
            raise ValueError("C must exceed 0.5")
        if value >= 1.0:
            raise ValueError("C must be below 1")
        return value

    @field_validator("n_predictors")
    @classmethod
    def _check_predictors(cls, value: int) -> int:
        if value < 1:
            raise ValueError("predictors must be at least 1")
        return value

    def with_c(self, c_stat: float) -> "TrueModelSpec":
        return self.model_copy(update={"c_stat": c_stat})

    def single_predictor(self) -> "TrueModelSpec":
        return self.model_copy(update={"n_predictors": 1})


class AcceptanceInterval(BaseModel):
    """Bounds of acceptable calibration slope."""

    model_config = ConfigDict(frozen=True)

    lower: float = 0.85
    upper: float = 1.15

    @model_validator(mode="after")
    def _check_order(self) -> "AcceptanceInterval":
        if not self.lower < self.upper:
            raise ValueError("lower must be < upper")
        return self

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


class SimulationConfig(BaseModel):
    """Monte Carlo budget and fitting options."""

    model_config = ConfigDict(frozen=True)

    n_sim: int | None = Field(default=None, ge=100)
    n_val: int = Field(default=50_000, ge=10_000)
    seed: int = 20240601
    workers: int = Field(default=1, ge=1)
    fit_method: FitMethod = FitMethod.MLE
    fast_coefficients: bool = False
    lsf_bootstraps: int = Field(default=200, ge=50)
    shared_validation: bool = False
    reference_size: int = Field(default=200_000, ge=10_000)
    mc_size: int = Field(default=1_000_000, ge=100_000)
    max_failure_rate: float = Field(default=0.05, gt=0.0, lt=1.0)
    max_search_iterations: int = Field(default=12, ge=1)
    max_bracket_expansions: int = Field(default=3, ge=0)
    max_n: int = Field(default=500_000, ge=10)

    @model_validator(mode="after")
    def _check_fast_path(self) -> "SimulationConfig":
        if self.fast_coefficients and self.fit_method is FitMethod.MLE_LSF:
            raise ValueError("fast coefficient draws cannot be combined with bootstrap shrinkage")
        return self

    def n_sim_for(self, n_predictors: int) -> int:
        """Replicate count; small models default to more replicates."""
        if self.n_sim is not None:
            return self.n_sim
        return 3000 if n_predictors <= 6 else 2000


class DgmDerived(BaseModel):
    """Scalar summaries of a calibrated data-generating mechanism."""

    model_config = ConfigDict(frozen=True)

    r2_cs: float
    c_adj: float
    c_adj_single: float
    r2_cs_adjusted: float
    mc_size: int
    seed: int


class AnalyticResult(BaseModel):
    """Closed-form sample size with the diagnostics that justify it."""

    n: int
    expected_slope: float
    slope_sd: float
    prap: float
    used_c: float
    used_c_variance: float
    r2_cs: float
    adjusted: bool


class PerformanceSummary(BaseModel):
    """Simulation estimands for one performance measure."""

    measure: Measure
    n_replicates: int
    mean: float
    sd: float
    prap: float | None = None
    mcse_mean: float
    mcse_prap: float | None = None
    quantiles: dict[str, float] = Field(default_factory=dict)


class SampleSizeSearchResult(BaseModel):
    """Outcome of a stochastic sample-size search."""

    n: int
    target: float
    target_kind: Literal["expected_slope", "prap"]
    achieved: float
    mcse: float
    iterations: list[tuple[int, float]] = Field(default_factory=list)
    analytic_seed_n: int
    converged: bool = True


class ScenarioFile(BaseModel):
    """Flat scenario keys mirroring the CLI flag names."""

    model_config = ConfigDict(extra="forbid")

    prev: float | None = None
    cstat: float | None = None
    predictors: int | None = None
    target_slope: float = 0.9
    target_prap: float = 0.8
    lower: float = 0.85
    upper: float = 1.15
    method: Method = "analytic"
    fit: Literal["mle", "mle-lsf"] = "mle"
    n_sim: int | None = None
    n_val: int = 50_000
    mc_size: int = 1_000_000
    lsf_bootstraps: int = 200
    fast_coefficients: bool = False
    seed: int | None = None
    workers: int = 1

    @field_validator("target_slope")
    @classmethod
    def _check_target_slope(cls, value: float) -> float:
        if not 0.5 < value < 1.0:
            raise ValueError("target slope must be in (0.5,1)")
        return value

    @field_validator("target_prap")
    @classmethod
    def _check_target_prap(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("target PrAP must be in (0,1)")
        return value

    def spec(self) -> TrueModelSpec:
        missing = [
            name for name in ("prev", "cstat", "predictors") if getattr(self, name) is None
        ]
        if missing:
            raise ValueError(f"missing required scenario values: {', '.join(missing)}")
        return TrueModelSpec(
            prevalence=float(self.prev),  # type: ignore[arg-type]
            c_stat=float(self.cstat),  # type: ignore[arg-type]
            n_predictors=int(self.predictors),  # type: ignore[arg-type]
        )

    def interval(self) -> AcceptanceInterval:
        return AcceptanceInterval(lower=self.lower, upper=self.upper)

    def simulation(self, default_seed: int) -> SimulationConfig:
        return SimulationConfig(
            n_sim=self.n_sim,
            n_val=self.n_val,
            seed=self.seed if self.seed is not None else default_seed,
            workers=self.workers,
            fit_method=FitMethod.MLE_LSF if self.fit == "mle-lsf" else FitMethod.MLE,
            fast_coefficients=self.fast_coefficients,
            lsf_bootstraps=self.lsf_bootstraps,
            mc_size=self.mc_size,
        )
