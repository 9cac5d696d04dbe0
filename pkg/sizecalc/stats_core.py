"""Logistic fitting, calibration fitting and validation performance measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, logit
from scipy.stats import rankdata

from sizecalc.exceptions import (
    ConstantPredictor,
    DegenerateOutcome,
    NonConvergence,
    ValidationError,
)

PROB_EPS = 1e-12
MAX_ITER = 50
DEVIANCE_TOL = 1e-10
SCORE_TOL = 1e-8
# Relative deviance rise treated as rounding noise by the step-halving test.
DEVIANCE_SLACK = 1e-9
# logits beyond this are numerically saturated; treated as separation
SEPARATION_LIMIT = 20.0
MAX_STEP_HALVINGS = 30


def clip_probs(probs: ArrayLike) -> NDArray[np.float64]:
    return np.clip(np.asarray(probs, dtype=float), PROB_EPS, 1.0 - PROB_EPS)


@dataclass(frozen=True)
class Dataset:
    """Binary outcomes with their covariate matrix (and true risks when simulated)."""

    outcomes: NDArray[np.int8]
    covariates: NDArray[np.float64]
    true_probs: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        outcomes = np.asarray(self.outcomes)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if outcomes.ndim != 1 or covariates.ndim != 2:
            raise ValidationError("outcomes must be 1-D and covariates 2-D")
        if outcomes.shape[0] < 1 or covariates.shape[1] < 1:
            raise ValidationError("a dataset needs at least one row and one covariate")
        if covariates.shape[0] != outcomes.shape[0]:
            raise ValidationError(
                f"outcomes length {outcomes.shape[0]} != covariate rows {covariates.shape[0]}"
            )
        if not np.all((outcomes == 0) | (outcomes == 1)):
            raise ValidationError("outcomes must be binary 0/1")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "covariates", covariates)
        if self.true_probs is not None:
            true_probs = np.asarray(self.true_probs, dtype=float)
            if true_probs.shape != outcomes.shape:
                raise ValidationError("true_probs length must match outcomes")
            object.__setattr__(self, "true_probs", true_probs)

    @property
    def n(self) -> int:
        return int(self.outcomes.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def event_rate(self) -> float:
        return float(np.mean(self.outcomes))

    def take(self, rows: NDArray[np.intp]) -> "Dataset":
        """Row subset (used for bootstrap resamples)."""
        return Dataset(
            outcomes=self.outcomes[rows],
            covariates=self.covariates[rows],
            true_probs=None if self.true_probs is None else self.true_probs[rows],
        )


@dataclass(frozen=True)
class FittedLogistic:
    """Maximum-likelihood logistic coefficients and convergence diagnostics."""

    intercept: float
    slopes: NDArray[np.float64]
    converged: bool
    iterations: int
    max_abs_score: float
    covariance: NDArray[np.float64] | None = field(default=None, repr=False)

    def coefficients(self) -> NDArray[np.float64]:
        return np.concatenate([[self.intercept], np.asarray(self.slopes, dtype=float)])

    def linear_predictor(self, covariates: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.intercept + np.asarray(covariates, dtype=float) @ np.asarray(self.slopes)

    def predict_proba(self, covariates: NDArray[np.float64]) -> NDArray[np.float64]:
        return expit(self.linear_predictor(covariates))


@dataclass(frozen=True)
class CalibrationFit:
    """Intercept and slope of outcomes regressed on a linear predictor."""

    intercept: float
    slope: float
    slope_se: float


@dataclass(frozen=True)
class MeasureSet:
    """Validation performance of one fitted model."""

    cal_slope: float
    cal_in_large: float
    c_stat: float
    brier: float
    mape: float | None = None


def _require_both_classes(outcomes: NDArray, stage: str) -> tuple[int, int]:
    events = int(np.count_nonzero(outcomes == 1))
    non_events = int(outcomes.shape[0]) - events
    if events == 0 or non_events == 0:
        raise DegenerateOutcome(
            f"{stage}: outcomes need at least one event and one non-event "
            f"(events={events}, non_events={non_events})"
        )
    return events, non_events


def _deviance(outcomes: NDArray[np.float64], eta: NDArray[np.float64]) -> float:
    return 2.0 * float(np.sum(np.logaddexp(0.0, eta) - outcomes * eta))


def fit_logistic(
    data: Dataset,
    offset: ArrayLike | None = None,
    fixed_slopes: bool = False,
    *,
    max_iter: int = MAX_ITER,
) -> FittedLogistic:
    """Fit a logistic regression by iteratively reweighted least squares.

    With ``fixed_slopes`` only the intercept is estimated and ``offset`` carries
    the rest of the linear predictor; the returned slopes are then zeros.
    Raises NonConvergence on separation or when the iteration cap is reached.
    """
    y = data.outcomes.astype(float)
    _require_both_classes(data.outcomes, "fit_logistic")
    n = data.n
    offset_arr = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if offset_arr.shape != (n,):
        raise ValidationError(f"offset length {offset_arr.shape} != {n}")

    if fixed_slopes:
        design = np.ones((n, 1))
    else:
        constant = np.flatnonzero(np.ptp(data.covariates, axis=0) == 0)
        if constant.size:
            raise ConstantPredictor(
                f"fit_logistic: covariate columns {constant.tolist()} are constant"
            )
        design = np.column_stack([np.ones(n), data.covariates])

    beta = np.zeros(design.shape[1])
    beta[0] = float(logit(clip_probs(np.mean(y)))) - float(np.mean(offset_arr))
    eta = design @ beta + offset_arr
    deviance = _deviance(y, eta)
    max_score = np.inf
    iterations = 0
    converged = False

    for iterations in range(1, max_iter + 1):
        mu = expit(eta)
        weights = mu * (1.0 - mu)
        score = design.T @ (y - mu)
        info = design.T @ (design * weights[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(
                f"fit_logistic: singular information matrix at iteration {iterations}"
            ) from exc
        if not np.all(np.isfinite(step)):
            raise NonConvergence(f"fit_logistic: non-finite step at iteration {iterations}")

        candidate = beta + step
        candidate_eta = design @ candidate + offset_arr
        candidate_deviance = _deviance(y, candidate_eta)
        halvings = 0
        ceiling = deviance + DEVIANCE_SLACK * (abs(deviance) + 1.0)
        while candidate_deviance > ceiling and halvings < MAX_STEP_HALVINGS:
            step = step / 2.0
            candidate = beta + step
            candidate_eta = design @ candidate + offset_arr
            candidate_deviance = _deviance(y, candidate_eta)
            halvings += 1

        relative_change = abs(deviance - candidate_deviance) / (abs(candidate_deviance) + 0.1)
        beta, eta, deviance = candidate, candidate_eta, candidate_deviance
        max_score = float(np.max(np.abs(design.T @ (y - expit(eta)))))
        if relative_change < DEVIANCE_TOL and max_score < SCORE_TOL:
            converged = True
            break

    if np.max(np.abs(beta)) > SEPARATION_LIMIT:
        raise NonConvergence(
            f"fit_logistic: |coefficient| {np.max(np.abs(beta)):.1f} exceeds "
            f"{SEPARATION_LIMIT} (separation)"
        )
    if not converged:
        raise NonConvergence(
            f"fit_logistic: no convergence after {max_iter} iterations "
            f"(max score {max_score:.3g})"
        )

    mu = expit(eta)
    info = design.T @ (design * (mu * (1.0 - mu))[:, None])
    try:
        covariance = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence("fit_logistic: singular information matrix at solution") from exc

    slopes = np.zeros(data.p) if fixed_slopes else beta[1:].copy()
    return FittedLogistic(
        intercept=float(beta[0]),
        slopes=slopes,
        converged=True,
        iterations=iterations,
        max_abs_score=max_score,
        covariance=covariance,
    )


def _paired(first: ArrayLike, second: ArrayLike, stage: str) -> tuple[NDArray, NDArray]:
    a = np.asarray(first)
    b = np.asarray(second, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"{stage}: length mismatch {a.shape} vs {b.shape}")
    return a, b


def fit_calibration(outcomes: ArrayLike, linear_predictor: ArrayLike) -> CalibrationFit:
    """Calibration intercept and slope: logit P(Y=1) = a + s * lp."""
    y, lp = _paired(outcomes, linear_predictor, "fit_calibration")
    if np.ptp(lp) == 0:
        raise ConstantPredictor("fit_calibration: linear predictor is constant")
    fit = fit_logistic(Dataset(outcomes=y, covariates=lp[:, None]))
    assert fit.covariance is not None
    return CalibrationFit(
        intercept=fit.intercept,
        slope=float(fit.slopes[0]),
        slope_se=float(np.sqrt(fit.covariance[1, 1])),
    )


def calibration_in_large(outcomes: ArrayLike, linear_predictor: ArrayLike) -> float:
    """Intercept of a logistic fit with the linear predictor as offset (0 is ideal)."""
    y, lp = _paired(outcomes, linear_predictor, "calibration_in_large")
    fit = fit_logistic(Dataset(outcomes=y, covariates=lp[:, None]), offset=lp, fixed_slopes=True)
    return fit.intercept


def concordance(outcomes: ArrayLike, scores: ArrayLike) -> float:
    """C-statistic via the Mann-Whitney rank-sum; tied pairs count 0.5."""
    y, s = _paired(outcomes, scores, "concordance")
    events, non_events = _require_both_classes(y, "concordance")
    ranks = rankdata(s, method="average")
    u_statistic = float(np.sum(ranks[y == 1])) - events * (events + 1) / 2.0
    return u_statistic / (events * non_events)


def brier(outcomes: ArrayLike, probs: ArrayLike) -> float:
    y, p = _paired(outcomes, probs, "brier")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValidationError("brier: probabilities must lie in [0,1]")
    return float(np.mean((y - p) ** 2))


def mape(true_probs: ArrayLike, probs: ArrayLike) -> float:
    """Mean absolute difference between true and predicted probabilities."""
    t, p = _paired(true_probs, probs, "mape")
    t = t.astype(float)
    if np.any((p < 0.0) | (p > 1.0)) or np.any((t < 0.0) | (t > 1.0)):
        raise ValidationError("mape: probabilities must lie in [0,1]")
    return float(np.mean(np.abs(t - p)))


def measure_all(validation: Dataset, model: FittedLogistic) -> MeasureSet:
    """Evaluate one fitted model on validation data."""
    if validation.p != len(model.slopes):
        raise ValidationError(
            f"measure_all: validation has {validation.p} covariates, model has {len(model.slopes)}"
        )
    lp = model.linear_predictor(validation.covariates)
    probs = expit(lp)
    calibration = fit_calibration(validation.outcomes, lp)
    return MeasureSet(
        cal_slope=calibration.slope,
        cal_in_large=calibration_in_large(validation.outcomes, lp),
        c_stat=concordance(validation.outcomes, lp),
        brier=brier(validation.outcomes, probs),
        mape=None if validation.true_probs is None else mape(validation.true_probs, probs),
    )
