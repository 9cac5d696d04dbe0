"""Simulation engine for performance distributions and stochastic sample-size search.

Every replicate owns RNG streams derived from (seed, replicate index, stage), so a
distribution is identical for any worker count, and the same replicate seeds are
reused at every probed n (common random numbers).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from sizecalc.analytic import analytic_n_for_expected, analytic_n_for_prap
from sizecalc.dgm import LinearPredictorParams, calibrate_linear_predictor, derive, generate_dataset
from sizecalc.exceptions import (
    BracketFailure,
    CalibrationFailure,
    ConstantPredictor,
    DegenerateOutcome,
    EmptyDistribution,
    ExcessiveFailures,
    NonConvergence,
    NonMonotone,
    NonPositiveDefinite,
    NoSolution,
    ValidationError,
)
from sizecalc.metrics import REPLICATE_DURATION_SECONDS, REPLICATES_TOTAL, SEARCH_PROBES_TOTAL
from sizecalc.schemas import (
    MEASURES,
    AcceptanceInterval,
    DgmDerived,
    FitMethod,
    Measure,
    PerformanceSummary,
    SampleSizeSearchResult,
    SimulationConfig,
    TrueModelSpec,
)
from sizecalc.shrinkage import ShrunkModel, fit_with_lsf, record_bootstrap_fits
from sizecalc.stats_core import Dataset, FittedLogistic, MeasureSet, fit_logistic, measure_all
from sizecalc.utils import run_indexed, stream_seed

LOGGER = logging.getLogger(__name__)

CSV_COLUMNS = ("replicate_index", "cal_slope", "c_stat", "brier", "mape", "cal_in_large")
QUANTILES = {"2.5%": 0.025, "50%": 0.5, "97.5%": 0.975}
MIN_SEARCH_TOL = 0.005
BRACKET_LOW, BRACKET_HIGH = 0.6, 1.8

_FIT_FAILURES = (NonConvergence, DegenerateOutcome, ConstantPredictor, ExcessiveFailures)


@dataclass
class PerformanceDistribution:
    """Per-replicate measures of the successful replicates, ordered by replicate index."""

    n: int
    seed: int
    n_total: int
    n_failed: int
    fit_method: FitMethod
    replicate_index: NDArray[np.int64]
    cal_slope: NDArray[np.float64]
    c_stat: NDArray[np.float64]
    brier: NDArray[np.float64]
    mape: NDArray[np.float64]
    cal_in_large: NDArray[np.float64]
    lsf: NDArray[np.float64] | None = None
    failures: dict[str, int] = field(default_factory=dict)

    def values(self, measure: Measure) -> NDArray[np.float64]:
        if measure not in MEASURES:
            raise ValidationError(f"unknown measure {measure!r}")
        return getattr(self, measure)

    def to_csv(self, path: str | Path) -> None:
        """One row per successful replicate, header included."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for row in zip(
                self.replicate_index.tolist(),
                self.cal_slope.tolist(),
                self.c_stat.tolist(),
                self.brier.tolist(),
                self.mape.tolist(),
                self.cal_in_large.tolist(),
            ):
                writer.writerow(row)


@dataclass(frozen=True)
class ReplicateOutcome:
    measures: MeasureSet | None
    lsf: float | None = None
    error: str | None = None
    bootstrap_ok: int = 0
    bootstrap_failed: int = 0


def draw_coefficients_fast(
    params: LinearPredictorParams,
    n: int,
    reference: FittedLogistic,
    reference_size: int,
    seed: int,
) -> FittedLogistic:
    """Draw coefficients from N(true beta, Sigma_ref * reference_size / n) instead of fitting."""
    if reference.covariance is None:
        raise ValidationError("draw_coefficients_fast: reference fit carries no covariance")
    if n < 1:
        raise ValidationError("draw_coefficients_fast: n must be at least 1")
    covariance = np.asarray(reference.covariance) * (reference_size / n)
    rng = np.random.default_rng(seed)
    try:
        draw = rng.multivariate_normal(params.coefficients(), covariance, method="cholesky")
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite(
            "draw_coefficients_fast: covariance is not positive definite"
        ) from exc
    return FittedLogistic(
        intercept=float(draw[0]),
        slopes=draw[1:],
        converged=True,
        iterations=0,
        max_abs_score=float("nan"),
        covariance=covariance,
    )


@dataclass(frozen=True)
class _ReplicateTask:
    """Picklable per-replicate job: train at size n, validate, measure."""

    params: LinearPredictorParams
    n: int
    seed: int
    n_val: int
    fit_method: FitMethod
    lsf_bootstraps: int
    reference: FittedLogistic | None = None
    reference_size: int = 0
    validation: Dataset | None = None

    def _model(self, index: int) -> tuple[FittedLogistic, ShrunkModel | None]:
        train_seed = stream_seed(self.seed, index, "train")
        if self.reference is not None:
            model = draw_coefficients_fast(
                self.params, self.n, self.reference, self.reference_size, train_seed
            )
            return model, None
        train = generate_dataset(self.params, self.n, train_seed)
        if self.fit_method is FitMethod.MLE_LSF:
            shrunk = fit_with_lsf(
                train,
                self.lsf_bootstraps,
                stream_seed(self.seed, index, "bootstrap"),
                record_metrics=False,
            )
            return shrunk.as_fitted(), shrunk
        return fit_logistic(train), None

    def __call__(self, index: int) -> ReplicateOutcome:
        try:
            model, shrunk = self._model(index)
            validation = self.validation
            if validation is None:
                validation = generate_dataset(
                    self.params, self.n_val, stream_seed(self.seed, index, "validate")
                )
            measures = measure_all(validation, model)
            if shrunk is None:
                return ReplicateOutcome(measures=measures)
            return ReplicateOutcome(
                measures=measures,
                lsf=shrunk.lsf,
                bootstrap_ok=shrunk.bootstraps_used,
                bootstrap_failed=shrunk.bootstrap_failures,
            )
        except ExcessiveFailures as exc:
            return ReplicateOutcome(
                measures=None,
                error=type(exc).__name__,
                bootstrap_ok=exc.n_total - exc.n_failed,
                bootstrap_failed=exc.n_failed,
            )
        except _FIT_FAILURES as exc:
            return ReplicateOutcome(measures=None, error=type(exc).__name__)


def _calibrated(spec: TrueModelSpec) -> LinearPredictorParams:
    try:
        return calibrate_linear_predictor(spec)
    except (NoSolution, NonMonotone) as exc:
        raise CalibrationFailure(f"simulate_performance: {exc.detail}") from exc


def simulate_performance(
    spec: TrueModelSpec,
    n: int,
    config: SimulationConfig,
    params: LinearPredictorParams | None = None,
) -> PerformanceDistribution:
    """Sampling distribution of validation performance for models developed on n rows."""
    if n <= spec.n_predictors:
        raise ValidationError(f"n={n} must exceed the {spec.n_predictors} predictors")
    params = params or _calibrated(spec)
    n_sim = config.n_sim_for(spec.n_predictors)

    reference = None
    if config.fast_coefficients:
        reference_data = generate_dataset(
            params, config.reference_size, stream_seed(config.seed, 0, "reference")
        )
        reference = fit_logistic(reference_data)
    validation = None
    if config.shared_validation:
        validation = generate_dataset(params, config.n_val, stream_seed(config.seed, 0, "validate"))

    task = _ReplicateTask(
        params=params,
        n=n,
        seed=config.seed,
        n_val=config.n_val,
        fit_method=config.fit_method,
        lsf_bootstraps=config.lsf_bootstraps,
        reference=reference,
        reference_size=config.reference_size,
        validation=validation,
    )
    started = time.perf_counter()
    with REPLICATE_DURATION_SECONDS.labels(fit_method=config.fit_method.value).time():
        outcomes = run_indexed(task, range(n_sim), workers=config.workers)

    kept = [(index, outcome) for index, outcome in outcomes if outcome.measures is not None]
    failures: dict[str, int] = {}
    for index, outcome in outcomes:
        if outcome.error is not None:
            failures[outcome.error] = failures.get(outcome.error, 0) + 1
            LOGGER.debug(
                "replicate failed",
                extra={
                    "event": "replicate_failed",
                    "context": {"index": index, "error": outcome.error},
                },
            )
    n_failed = n_sim - len(kept)
    REPLICATES_TOTAL.labels(status="ok", fit_method=config.fit_method.value).inc(len(kept))
    REPLICATES_TOTAL.labels(status="failed", fit_method=config.fit_method.value).inc(n_failed)
    if config.fit_method is FitMethod.MLE_LSF:
        record_bootstrap_fits(
            sum(outcome.bootstrap_ok for _, outcome in outcomes),
            sum(outcome.bootstrap_failed for _, outcome in outcomes),
        )

    if n_failed > config.max_failure_rate * n_sim:
        raise ExcessiveFailures(
            f"simulate_performance: {n_failed} of {n_sim} replicates failed at n={n} ({failures})",
            n_failed=n_failed,
            n_total=n_sim,
        )

    def column(name: str) -> NDArray[np.float64]:
        values = [getattr(outcome.measures, name) for _, outcome in kept]
        return np.asarray([np.nan if value is None else value for value in values], dtype=float)

    lsf_values = [outcome.lsf for _, outcome in kept if outcome.lsf is not None]
    dist = PerformanceDistribution(
        n=n,
        seed=config.seed,
        n_total=n_sim,
        n_failed=n_failed,
        fit_method=config.fit_method,
        replicate_index=np.asarray([index for index, _ in kept], dtype=np.int64),
        cal_slope=column("cal_slope"),
        c_stat=column("c_stat"),
        brier=column("brier"),
        mape=column("mape"),
        cal_in_large=column("cal_in_large"),
        lsf=np.asarray(lsf_values) if lsf_values else None,
        failures=failures,
    )
    LOGGER.info(
        "simulation completed",
        extra={
            "event": "simulation_completed",
            "context": {
                "n": n,
                "n_sim": n_sim,
                "n_failed": n_failed,
                "fit_method": config.fit_method.value,
                "fast_coefficients": config.fast_coefficients,
                "elapsed_s": round(time.perf_counter() - started, 3),
            },
        },
    )
    return dist


def summarize(
    dist: PerformanceDistribution,
    measure: Measure,
    interval: AcceptanceInterval | None = None,
) -> PerformanceSummary:
    """Mean, SD, quantiles and (with an interval) PrAP of one measure, with MCSEs."""
    raw = dist.values(measure)
    values = raw[np.isfinite(raw)]
    count = int(values.size)
    if count == 0:
        raise EmptyDistribution(f"summarize: no finite {measure} values")
    sd = float(np.std(values, ddof=1)) if count > 1 else 0.0
    prap = mcse_prap = None
    if interval is not None:
        inside = (values >= interval.lower) & (values <= interval.upper)
        prap = float(np.mean(inside))
        mcse_prap = math.sqrt(prap * (1.0 - prap) / count)
    quantiles = np.quantile(values, list(QUANTILES.values()))
    return PerformanceSummary(
        measure=measure,
        n_replicates=count,
        mean=float(np.mean(values)),
        sd=sd,
        prap=prap,
        mcse_mean=sd / math.sqrt(count),
        mcse_prap=mcse_prap,
        quantiles={label: float(value) for label, value in zip(QUANTILES, quantiles)},
    )


def summarize_all(
    dist: PerformanceDistribution,
    slope_interval: AcceptanceInterval | None = None,
) -> dict[str, PerformanceSummary]:
    """Summaries for every measure with finite values; PrAP only for the slope."""
    summaries: dict[str, PerformanceSummary] = {}
    for measure in MEASURES:
        if not np.any(np.isfinite(dist.values(measure))):
            continue
        interval = slope_interval if measure == "cal_slope" else None
        summaries[measure] = summarize(dist, measure, interval)
    return summaries


Probe = Callable[[int], tuple[float, float]]


def _stochastic_search(
    target: float,
    target_kind: str,
    seed_n: int,
    probe_fn: Probe,
    tolerance: Callable[[float], float],
    config: SimulationConfig,
    min_n: int,
) -> SampleSizeSearchResult:
    """Find n where an increasing noisy function of n crosses ``target``.

    Brackets around ``seed_n``, expands a bounded number of times, then narrows
    by clamped interpolation until the estimate is within tolerance or the
    bracket is a single step wide.
    """
    probes: list[tuple[int, float]] = []
    cache: dict[int, tuple[float, float]] = {}

    def probe(n: int) -> tuple[float, float]:
        n = int(min(max(n, min_n), config.max_n))
        if n not in cache:
            cache[n] = probe_fn(n)
            probes.append((n, cache[n][0]))
            SEARCH_PROBES_TOTAL.labels(target=target_kind).inc()
            LOGGER.info(
                "search probe",
                extra={
                    "event": "search_probe",
                    "context": {"target": target_kind, "n": n, "achieved": cache[n][0]},
                },
            )
        return cache[n]

    def result(n: int, converged: bool) -> SampleSizeSearchResult:
        achieved, mcse = cache[n]
        return SampleSizeSearchResult(
            n=n,
            target=target,
            target_kind=target_kind,  # type: ignore[arg-type]
            achieved=achieved,
            mcse=mcse,
            iterations=list(probes),
            analytic_seed_n=seed_n,
            converged=converged,
        )

    def close(n: int) -> bool:
        achieved, mcse = cache[n]
        return abs(achieved - target) <= tolerance(mcse)

    lo = max(min_n, math.floor(BRACKET_LOW * seed_n))
    hi = min(config.max_n, max(lo + 1, math.ceil(BRACKET_HIGH * seed_n)))
    for candidate in (lo, hi):
        probe(candidate)
        if close(candidate):
            return result(candidate, True)

    expansions = 0
    while cache[lo][0] > target:
        if expansions >= config.max_bracket_expansions or lo <= min_n:
            raise BracketFailure(f"{target_kind} search: target {target} below every probe", probes)
        hi, lo = lo, max(min_n, math.floor(BRACKET_LOW * lo))
        probe(lo)
        expansions += 1
        if close(lo):
            return result(lo, True)
    while cache[hi][0] < target:
        if expansions >= config.max_bracket_expansions or hi >= config.max_n:
            raise BracketFailure(f"{target_kind} search: target {target} above every probe", probes)
        lo, hi = hi, min(config.max_n, math.ceil(BRACKET_HIGH * hi))
        probe(hi)
        expansions += 1
        if close(hi):
            return result(hi, True)

    for _ in range(config.max_search_iterations):
        width = hi - lo
        if width <= max(1.0, 0.005 * hi):
            return result(hi, close(hi))
        low_value, high_value = cache[lo][0], cache[hi][0]
        fraction = 0.5
        if high_value > low_value:
            fraction = (target - low_value) / (high_value - low_value)
        guess = lo + min(max(fraction, 0.1), 0.9) * width
        n = int(round(guess))
        if n <= lo or n >= hi:
            n = (lo + hi) // 2
        if n <= lo or n >= hi:
            return result(hi, close(hi))
        achieved, _ = probe(n)
        if close(n):
            return result(n, True)
        if achieved < target:
            lo = n
        else:
            hi = n
    return result(hi, False)


def _search_setup(
    spec: TrueModelSpec, config: SimulationConfig, derived: DgmDerived | None
) -> tuple[LinearPredictorParams, DgmDerived]:
    params = _calibrated(spec)
    return params, derived or derive(spec, config.mc_size, config.seed)


def find_n_expected(
    spec: TrueModelSpec,
    target_es: float,
    config: SimulationConfig,
    derived: DgmDerived | None = None,
) -> SampleSizeSearchResult:
    """Simulated n at which the mean calibration slope reaches ``target_es``."""
    if not 0.5 < target_es < 1.0:
        raise ValidationError("target slope must be in (0.5,1)")
    params, derived = _search_setup(spec, config, derived)
    seed_n = analytic_n_for_expected(spec, target_es, derived).n

    def probe(n: int) -> tuple[float, float]:
        summary = summarize(simulate_performance(spec, n, config, params=params), "cal_slope")
        return summary.mean, summary.mcse_mean

    return _stochastic_search(
        target=target_es,
        target_kind="expected_slope",
        seed_n=seed_n,
        probe_fn=probe,
        tolerance=lambda mcse: max(MIN_SEARCH_TOL, 2.0 * mcse),
        config=config,
        min_n=spec.n_predictors + 2,
    )


def find_n_prap(
    spec: TrueModelSpec,
    interval: AcceptanceInterval,
    target: float,
    config: SimulationConfig,
    derived: DgmDerived | None = None,
) -> SampleSizeSearchResult:
    """Simulated n at which the fraction of slopes inside ``interval`` reaches ``target``."""
    if not 0.0 < target < 1.0:
        raise ValidationError("target PrAP must be in (0,1)")
    params, derived = _search_setup(spec, config, derived)
    seed_n = analytic_n_for_prap(spec, interval, target, derived).n

    def probe(n: int) -> tuple[float, float]:
        dist = simulate_performance(spec, n, config, params=params)
        summary = summarize(dist, "cal_slope", interval)
        assert summary.prap is not None and summary.mcse_prap is not None
        return summary.prap, summary.mcse_prap

    return _stochastic_search(
        target=target,
        target_kind="prap",
        seed_n=seed_n,
        probe_fn=probe,
        tolerance=lambda mcse: max(MIN_SEARCH_TOL, mcse),
        config=config,
        min_n=spec.n_predictors + 2,
    )
