"""Bootstrap linear shrinkage factor (LSF) and its application to a fitted model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from sizecalc.analytic import analytic_n_for_expected, analytic_n_for_prap
from sizecalc.dgm import calibrate_linear_predictor, derive
from sizecalc.exceptions import (
    ConstantPredictor,
    DegenerateOutcome,
    ExcessiveFailures,
    NonConvergence,
    ValidationError,
)
from sizecalc.metrics import BOOTSTRAP_FITS_TOTAL
from sizecalc.schemas import (
    AcceptanceInterval,
    DgmDerived,
    FitMethod,
    PerformanceSummary,
    SimulationConfig,
    TrueModelSpec,
)
from sizecalc.stats_core import Dataset, FittedLogistic, fit_calibration, fit_logistic
from sizecalc.utils import stream_seed

LOGGER = logging.getLogger(__name__)

MIN_BOOTSTRAPS = 50
MAX_BOOTSTRAP_FAILURE_RATE = 0.20


@dataclass(frozen=True)
class LsfEstimate:
    lsf: float
    bootstraps_used: int
    bootstrap_failures: int
    lsf_se: float


@dataclass(frozen=True)
class ShrunkModel:
    """MLE slopes scaled by the LSF, with the intercept refitted on the training data."""

    lsf: float
    slopes: NDArray[np.float64]
    intercept: float
    base: FittedLogistic
    bootstraps_used: int = 0
    bootstrap_failures: int = 0

    @property
    def lsf_above_one(self) -> bool:
        return self.lsf > 1.0

    def as_fitted(self) -> FittedLogistic:
        return FittedLogistic(
            intercept=self.intercept,
            slopes=self.slopes,
            converged=True,
            iterations=self.base.iterations,
            max_abs_score=self.base.max_abs_score,
        )


def _resample(data: Dataset, rng: np.random.Generator) -> Dataset:
    sample = data.take(rng.integers(0, data.n, size=data.n))
    if np.all(sample.outcomes == sample.outcomes[0]):
        raise DegenerateOutcome("bootstrap: resample has a single outcome class")
    return sample


def bootstrap_lsf_detail(
    data: Dataset, b: int = 200, seed: int = 0, *, record_metrics: bool = True
) -> LsfEstimate:
    """Mean calibration slope of bootstrap-fitted models evaluated on the original data.

    Resamples without both outcome classes are redrawn once; a second failure,
    or a failed fit, is counted and skipped. Simulation replicates pass
    ``record_metrics=False`` and report the counts back to the parent process.
    """
    if b < MIN_BOOTSTRAPS:
        raise ValidationError(f"bootstrap count must be at least {MIN_BOOTSTRAPS}")
    slopes: list[float] = []
    failures = 0
    for index in range(b):
        rng = np.random.default_rng(stream_seed(seed, index, "bootstrap"))
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(2),
                retry=retry_if_exception_type(DegenerateOutcome),
                reraise=True,
            ):
                with attempt:
                    sample = _resample(data, rng)
            refit = fit_logistic(sample)
            lp = refit.linear_predictor(data.covariates)
            slopes.append(fit_calibration(data.outcomes, lp).slope)
        except (NonConvergence, DegenerateOutcome, ConstantPredictor) as exc:
            failures += 1
            LOGGER.debug(
                "bootstrap fit skipped",
                extra={
                    "event": "bootstrap_failed",
                    "context": {"index": index, "error": type(exc).__name__},
                },
            )

    if record_metrics:
        record_bootstrap_fits(len(slopes), failures)
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * b:
        raise ExcessiveFailures(
            f"bootstrap_lsf: {failures} of {b} bootstrap fits failed", n_failed=failures, n_total=b
        )
    values = np.asarray(slopes)
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return LsfEstimate(
        lsf=float(np.mean(values)),
        bootstraps_used=int(values.size),
        bootstrap_failures=failures,
        lsf_se=se,
    )


def record_bootstrap_fits(ok: int, failed: int) -> None:
    BOOTSTRAP_FITS_TOTAL.labels(status="ok").inc(ok)
    BOOTSTRAP_FITS_TOTAL.labels(status="failed").inc(failed)


def bootstrap_lsf(data: Dataset, b: int = 200, seed: int = 0) -> float:
    return bootstrap_lsf_detail(data, b, seed).lsf


def apply_lsf(base: FittedLogistic, lsf: float, data: Dataset) -> ShrunkModel:
    """Scale slopes by ``lsf`` and refit the intercept with the shrunk predictor as offset."""
    if lsf < 0:
        raise ValidationError("shrinkage factor must be non-negative")
    slopes = np.asarray(base.slopes, dtype=float) * lsf
    refit = fit_logistic(data, offset=data.covariates @ slopes, fixed_slopes=True)
    if lsf > 1.0:
        LOGGER.info(
            "shrinkage factor above one",
            extra={"event": "lsf_above_one", "context": {"lsf": lsf}},
        )
    return ShrunkModel(lsf=float(lsf), slopes=slopes, intercept=refit.intercept, base=base)


def fit_with_lsf(
    data: Dataset, b: int = 200, seed: int = 0, *, record_metrics: bool = True
) -> ShrunkModel:
    """MLE fit followed by bootstrap shrinkage."""
    base = fit_logistic(data)
    estimate = bootstrap_lsf_detail(data, b, seed, record_metrics=record_metrics)
    shrunk = apply_lsf(base, estimate.lsf, data)
    return ShrunkModel(
        lsf=shrunk.lsf,
        slopes=shrunk.slopes,
        intercept=shrunk.intercept,
        base=base,
        bootstraps_used=estimate.bootstraps_used,
        bootstrap_failures=estimate.bootstrap_failures,
    )


@dataclass
class ShrinkageComparison:
    """Slope summaries per (size label, fit method) from shared-seed simulations."""

    sizes: dict[str, int]
    rows: dict[tuple[str, FitMethod], PerformanceSummary] = field(default_factory=dict)
    mean_lsf: dict[str, float] = field(default_factory=dict)

    def as_records(self) -> list[dict[str, object]]:
        records: list[dict[str, object]] = []
        ordered = sorted(self.rows.items(), key=lambda item: (item[0][0], item[0][1].value))
        for (label, method), summary in ordered:
            records.append(
                {
                    "size_label": label,
                    "n": self.sizes[label],
                    "fit_method": method.value,
                    "mean_slope": summary.mean,
                    "sd_slope": summary.sd,
                    "prap": summary.prap,
                    "mcse_prap": summary.mcse_prap,
                    "mean_lsf": self.mean_lsf.get(label) if method is FitMethod.MLE_LSF else None,
                }
            )
        return records


def shrinkage_experiment(
    spec: TrueModelSpec,
    config: SimulationConfig,
    interval: AcceptanceInterval,
    derived: DgmDerived | None = None,
    sizes: dict[str, int] | None = None,
) -> ShrinkageComparison:
    """Compare MLE and MLE+LSF at the expected-slope and PrAP sample sizes.

    Both fit methods reuse the same training and validation seeds. ``sizes``
    overrides the analytic ``standard`` (E(s)=0.9) and ``prap`` (PrAP=0.8) sizes.
    """
    from sizecalc.montecarlo import simulate_performance, summarize

    if sizes is None:
        derived = derived or derive(spec, config.mc_size, config.seed)
        sizes = {
            "standard": analytic_n_for_expected(spec, 0.9, derived).n,
            "prap": analytic_n_for_prap(spec, interval, 0.8, derived).n,
        }
    params = calibrate_linear_predictor(spec)
    comparison = ShrinkageComparison(sizes=dict(sizes))
    for label, n in sizes.items():
        for method in (FitMethod.MLE, FitMethod.MLE_LSF):
            run_config = config.model_copy(
                update={"fit_method": method, "fast_coefficients": False}
            )
            dist = simulate_performance(spec, n, run_config, params=params)
            comparison.rows[(label, method)] = summarize(dist, "cal_slope", interval)
            if method is FitMethod.MLE_LSF and dist.lsf is not None:
                comparison.mean_lsf[label] = float(np.mean(dist.lsf))
    LOGGER.info(
        "shrinkage experiment completed",
        extra={"event": "shrinkage_experiment", "context": {"sizes": sizes}},
    )
    return comparison
