"""Logistic-normal data-generating mechanism and its scalar summaries.

The true model is ``logit P(Y=1|X) = beta0 + beta * sum(X_j)`` with independent
standard-normal predictors, so the linear predictor is ``N(mu, sigma^2)`` with
``beta = sigma / sqrt(p)``. ``calibrate_linear_predictor`` picks ``(mu, sigma)``
to hit a target prevalence and C-statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.typing import NDArray
from scipy.optimize import brentq
from scipy.special import expit, logit

from sizecalc.config import DEFAULT_SEED
from sizecalc.exceptions import NonMonotone, NoSolution, ValidationError
from sizecalc.metrics import CALIBRATIONS_TOTAL
from sizecalc.schemas import DgmDerived, TrueModelSpec
from sizecalc.stats_core import Dataset, clip_probs
from sizecalc.utils import stream_seed

LOGGER = logging.getLogger(__name__)

RowSampler = Callable[[np.random.Generator, int, int], NDArray[np.float64]]

_GH_NODES, _GH_WEIGHTS = hermegauss(120)
_GH_NORM = math.sqrt(2.0 * math.pi)

# fine grid in standard-normal units for P(eta1 > eta0)
_GRID_Z = np.linspace(-10.0, 10.0, 8001)
_GRID_W = np.exp(-0.5 * _GRID_Z**2)
_GRID_W = _GRID_W / _GRID_W.sum()

SIGMA_MAX = 12.0
MIN_MC_SIZE = 100_000
RECOMMENDED_LDA_MC_SIZE = 1_000_000


@dataclass(frozen=True)
class LinearPredictorParams:
    """Calibrated linear-predictor distribution and the equal-slope coefficients."""

    mu: float
    sigma: float
    beta0: float
    beta: float
    p: int

    def coefficients(self) -> NDArray[np.float64]:
        return np.concatenate([[self.beta0], np.full(self.p, self.beta)])

    def linear_predictor(self, covariates: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.beta0 + self.beta * np.sum(covariates, axis=1)


def model_prevalence(mu: float, sigma: float) -> float:
    """E[expit(mu + sigma Z)] by Gauss-Hermite quadrature."""
    return float(np.dot(_GH_WEIGHTS, expit(mu + sigma * _GH_NODES)) / _GH_NORM)


def model_c_statistic(mu: float, sigma: float) -> float:
    """P(eta | Y=1 > eta | Y=0) for eta ~ N(mu, sigma^2), ties counted 0.5."""
    probs = expit(mu + sigma * _GRID_Z)
    events = _GRID_W * probs
    non_events = _GRID_W * (1.0 - probs)
    below = np.cumsum(non_events) - non_events
    return float(np.sum(events * (below + 0.5 * non_events)) / (events.sum() * non_events.sum()))


def solve_mu(prevalence: float, sigma: float) -> float:
    """Mean of the linear predictor giving the requested prevalence at fixed sigma."""
    centre = float(logit(prevalence))
    spread = 12.0 + 6.0 * sigma
    try:
        return float(
            brentq(
                lambda mu: model_prevalence(mu, sigma) - prevalence,
                centre - spread,
                centre + spread,
                xtol=1e-12,
            )
        )
    except ValueError as exc:
        raise NonMonotone(f"prevalence bracket failed at sigma={sigma:.4g}") from exc


def calibrate_linear_predictor(spec: TrueModelSpec, tol: float = 1e-4) -> LinearPredictorParams:
    """Find (mu, sigma) so the implied model has the spec's prevalence and C."""
    if tol <= 0:
        raise ValidationError("calibration tolerance must be positive")
    phi, target_c = spec.prevalence, spec.c_stat

    def c_gap(sigma: float) -> float:
        return model_c_statistic(solve_mu(phi, sigma), sigma) - target_c

    if c_gap(SIGMA_MAX) < 0:
        CALIBRATIONS_TOTAL.labels(status="no_solution").inc()
        raise NoSolution(
            f"calibrate: C={target_c} is not reachable at prevalence {phi} "
            f"(sigma capped at {SIGMA_MAX})"
        )
    try:
        sigma = float(brentq(c_gap, 0.0, SIGMA_MAX, xtol=1e-12))
    except ValueError as exc:
        CALIBRATIONS_TOTAL.labels(status="non_monotone").inc()
        raise NonMonotone(f"calibrate: C bracket failed for {spec}") from exc

    mu = solve_mu(phi, sigma)
    prevalence_error = abs(model_prevalence(mu, sigma) - phi)
    c_error = abs(model_c_statistic(mu, sigma) - target_c)
    if prevalence_error > tol or c_error > tol:
        CALIBRATIONS_TOTAL.labels(status="no_solution").inc()
        raise NoSolution(
            f"calibrate: residuals prevalence={prevalence_error:.2e}, C={c_error:.2e} exceed {tol}"
        )

    CALIBRATIONS_TOTAL.labels(status="ok").inc()
    LOGGER.debug(
        "dgm calibrated",
        extra={
            "event": "dgm_calibrated",
            "context": {"spec": spec.model_dump(), "mu": mu, "sigma": sigma},
        },
    )
    return LinearPredictorParams(
        mu=mu,
        sigma=sigma,
        beta0=mu,
        beta=sigma / math.sqrt(spec.n_predictors),
        p=spec.n_predictors,
    )


def generate_dataset(
    params: LinearPredictorParams,
    n: int,
    seed: int,
    row_sampler: RowSampler | None = None,
) -> Dataset:
    """Draw n rows from the true model.

    Covariates and outcomes come from separate child streams, so the first m
    rows of a size-n draw equal a size-m draw with the same seed.
    ``row_sampler(rng, n, p)`` replaces the standard-normal covariates.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    x_seq, y_seq = np.random.SeedSequence(int(seed) % (1 << 63)).spawn(2)
    x_rng = np.random.default_rng(x_seq)
    y_rng = np.random.default_rng(y_seq)
    if row_sampler is None:
        covariates = x_rng.standard_normal((n, params.p))
    else:
        covariates = np.asarray(row_sampler(x_rng, n, params.p), dtype=float)
    probs = expit(params.linear_predictor(covariates))
    outcomes = (y_rng.random(n) < probs).astype(np.int8)
    return Dataset(outcomes=outcomes, covariates=covariates, true_probs=probs)


def cox_snell_from_dataset(data: Dataset) -> float:
    """1 - exp(2 (l0 - l1) / N) with l1 at the true risks and l0 at the event rate."""
    if data.true_probs is None:
        raise ValidationError("Cox-Snell R2 needs the true probabilities")
    y = data.outcomes.astype(float)
    probs = clip_probs(data.true_probs)
    rate = float(clip_probs(np.mean(y)))
    loglik_true = float(np.sum(y * np.log(probs) + (1.0 - y) * np.log1p(-probs)))
    loglik_null = data.n * (rate * math.log(rate) + (1.0 - rate) * math.log1p(-rate))
    return 1.0 - math.exp(2.0 * (loglik_null - loglik_true) / data.n)


def cox_snell_r2(
    spec: TrueModelSpec,
    mc_size: int = 1_000_000,
    seed: int = DEFAULT_SEED,
    params: LinearPredictorParams | None = None,
) -> float:
    """Cox-Snell R2 of the true model from one large simulated dataset."""
    if mc_size < MIN_MC_SIZE:
        raise ValidationError(f"mc_size must be at least {MIN_MC_SIZE}")
    params = params or calibrate_linear_predictor(spec)
    # R2 depends on X only through eta ~ N(mu, sigma^2): one predictor suffices
    single = replace(params, p=1, beta=params.sigma)
    data = generate_dataset(single, mc_size, stream_seed(seed, 0, "r2"))
    return cox_snell_from_dataset(data)


def lda_log_odds(data: Dataset) -> NDArray[np.float64]:
    """Per-covariate LDA log-odds: mean difference over pooled within-class variance."""
    is_event = data.outcomes == 1
    events = data.covariates[is_event]
    non_events = data.covariates[~is_event]
    n1, n0 = events.shape[0], non_events.shape[0]
    if n1 < 2 or n0 < 2:
        raise ValidationError("LDA log-odds need at least two rows per outcome class")
    pooled = (
        (n0 - 1) * non_events.var(axis=0, ddof=1) + (n1 - 1) * events.var(axis=0, ddof=1)
    ) / (n0 + n1 - 2)
    return (events.mean(axis=0) - non_events.mean(axis=0)) / pooled


def adjusted_c(
    spec: TrueModelSpec,
    mc_size: int = RECOMMENDED_LDA_MC_SIZE,
    seed: int = DEFAULT_SEED,
    params: LinearPredictorParams | None = None,
) -> float:
    """Conservative C-statistic implied by the LDA log-odds of the true model.

    Simulates a large dataset, forms ``eta_LDA = sum(delta_j X_j)`` and returns
    the C-statistic of the logistic model with that linear predictor and an
    intercept matching the spec's prevalence. With ``spec.single_predictor()``
    this is the variant used in the slope-variance formula.
    """
    if mc_size < MIN_MC_SIZE:
        raise ValidationError(f"mc_size must be at least {MIN_MC_SIZE}")
    if mc_size < RECOMMENDED_LDA_MC_SIZE:
        LOGGER.warning(
            "adjusted C from a small simulation",
            extra={
                "event": "adjusted_c_small_mc",
                "context": {"mc_size": mc_size, "recommended": RECOMMENDED_LDA_MC_SIZE},
            },
        )
    params = params or calibrate_linear_predictor(spec)
    if params.p != spec.n_predictors:
        beta = params.sigma / math.sqrt(spec.n_predictors)
        params = replace(params, p=spec.n_predictors, beta=beta)
    data = generate_dataset(params, mc_size, stream_seed(seed, spec.n_predictors, "lda"))
    delta = lda_log_odds(data)
    sigma_lda = float(np.std(data.covariates @ delta))
    return model_c_statistic(solve_mu(spec.prevalence, sigma_lda), sigma_lda)


@lru_cache(maxsize=128)
def derive(
    spec: TrueModelSpec,
    mc_size: int = 1_000_000,
    seed: int = DEFAULT_SEED,
) -> DgmDerived:
    """R2_CS and adjusted C-statistics (p predictors and single predictor) for a spec."""
    params = calibrate_linear_predictor(spec)
    r2_cs = cox_snell_r2(spec, mc_size, seed, params=params)
    c_adj = adjusted_c(spec, mc_size, seed, params=params)
    c_adj_single = adjusted_c(spec.single_predictor(), mc_size, seed, params=params)
    if c_adj >= spec.c_stat:
        r2_cs_adjusted = r2_cs
    else:
        r2_cs_adjusted = cox_snell_r2(spec.with_c(c_adj), mc_size, seed)
    LOGGER.info(
        "dgm summaries derived",
        extra={
            "event": "dgm_derived",
            "context": {
                "spec": spec.model_dump(),
                "r2_cs": r2_cs,
                "c_adj": c_adj,
                "c_adj_single": c_adj_single,
            },
        },
    )
    return DgmDerived(
        r2_cs=r2_cs,
        c_adj=c_adj,
        c_adj_single=c_adj_single,
        r2_cs_adjusted=r2_cs_adjusted,
        mc_size=mc_size,
        seed=seed,
    )
