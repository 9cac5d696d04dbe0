"""Logistic fitting and performance measure tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.special import expit

from sizecalc.exceptions import (
    ConstantPredictor,
    DegenerateOutcome,
    NonConvergence,
    ValidationError,
)
from sizecalc.stats_core import (
    Dataset,
    FittedLogistic,
    brier,
    calibration_in_large,
    concordance,
    fit_calibration,
    fit_logistic,
    mape,
    measure_all,
)


def _simulated(n: int = 4000, p: int = 3, seed: int = 7) -> Dataset:
    rng = np.random.default_rng(seed)
    covariates = rng.standard_normal((n, p))
    probs = expit(-1.0 + covariates @ np.linspace(0.8, 0.2, p))
    outcomes = (rng.random(n) < probs).astype(np.int8)
    return Dataset(outcomes=outcomes, covariates=covariates, true_probs=probs)


def _brute_force_c(outcomes: np.ndarray, scores: np.ndarray) -> float:
    events = scores[outcomes == 1]
    non_events = scores[outcomes == 0]
    total = 0.0
    for a, b in itertools.product(events, non_events):
        total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (events.size * non_events.size)


def test_dataset_rejects_non_binary_outcomes() -> None:
    with pytest.raises(ValidationError, match="binary"):
        Dataset(outcomes=np.array([0, 2, 1]), covariates=np.zeros((3, 1)))


def test_dataset_rejects_length_mismatch() -> None:
    with pytest.raises(ValidationError, match="covariate rows"):
        Dataset(outcomes=np.array([0, 1, 1]), covariates=np.zeros((2, 1)))


def test_dataset_promotes_vector_covariates_and_takes_rows() -> None:
    data = Dataset(outcomes=np.array([0, 1, 1, 0]), covariates=np.arange(4.0))
    assert data.p == 1
    subset = data.take(np.array([1, 2]))
    assert subset.n == 2
    assert subset.event_rate == 1.0


def test_fit_logistic_reaches_score_tolerance_and_mean_identity() -> None:
    data = _simulated()
    fit = fit_logistic(data)

    assert fit.converged
    assert fit.max_abs_score < 1e-8
    assert np.mean(fit.predict_proba(data.covariates)) == pytest.approx(data.event_rate, abs=1e-8)
    assert fit.covariance is not None
    assert fit.covariance.shape == (4, 4)


def test_fit_logistic_meets_tolerances_on_random_small_instances() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(200, 401))
        p = int(rng.integers(1, 5))
        covariates = rng.standard_normal((n, p))
        probs = expit(-1.0 + covariates @ rng.normal(0.0, 0.5, size=p))
        outcomes = (rng.random(n) < probs).astype(np.int8)
        outcomes[:2] = [0, 1]
        data = Dataset(outcomes=outcomes, covariates=covariates)

        fit = fit_logistic(data)

        assert fit.max_abs_score < 1e-8
        mean_gap = abs(float(np.mean(fit.predict_proba(covariates))) - data.event_rate)
        assert mean_gap < 1e-10


def test_fit_logistic_converges_on_validation_sized_data() -> None:
    for seed in range(12):
        data = _simulated(n=50_000, p=10, seed=seed)
        fit = fit_logistic(data)
        assert fit.max_abs_score < 1e-8
        assert fit.iterations < 15


def test_fit_logistic_recovers_coefficients_on_large_sample() -> None:
    data = _simulated(n=60_000, p=2, seed=3)
    fit = fit_logistic(data)
    assert fit.intercept == pytest.approx(-1.0, abs=0.05)
    np.testing.assert_allclose(fit.slopes, [0.8, 0.2], atol=0.05)


def test_fit_logistic_intercept_only_matches_logit_event_rate() -> None:
    outcomes = np.array([1, 0, 0, 0] * 25, dtype=np.int8)
    data = Dataset(outcomes=outcomes, covariates=np.random.default_rng(0).standard_normal(100))
    fit = fit_logistic(data, fixed_slopes=True)
    assert fit.intercept == pytest.approx(math.log(0.25 / 0.75), abs=1e-8)
    np.testing.assert_array_equal(fit.slopes, [0.0])


def test_fit_logistic_separation_raises_non_convergence() -> None:
    data = Dataset(outcomes=np.array([0, 0, 1, 1]), covariates=np.array([1.0, 2.0, 3.0, 4.0]))
    with pytest.raises(NonConvergence):
        fit_logistic(data)


def test_fit_logistic_constant_column() -> None:
    covariates = np.column_stack([np.arange(6.0), np.ones(6)])
    data = Dataset(outcomes=np.array([0, 1, 0, 1, 1, 0]), covariates=covariates)
    with pytest.raises(ConstantPredictor, match=r"\[1\]"):
        fit_logistic(data)


def test_fit_logistic_single_class() -> None:
    data = Dataset(outcomes=np.zeros(5, dtype=np.int8), covariates=np.arange(5.0))
    with pytest.raises(DegenerateOutcome):
        fit_logistic(data)


def test_fit_calibration_on_true_predictor_is_near_one() -> None:
    rng = np.random.default_rng(11)
    lp = rng.normal(-1.5, 1.0, size=100_000)
    outcomes = (rng.random(lp.size) < expit(lp)).astype(np.int8)

    assert fit_calibration(outcomes, lp).slope == pytest.approx(1.0, abs=0.03)
    assert fit_calibration(outcomes, 2.0 * lp).slope == pytest.approx(0.5, abs=0.015)
    assert calibration_in_large(outcomes, lp) == pytest.approx(0.0, abs=0.03)


def test_fit_calibration_converges_on_large_validation_sets() -> None:
    rng = np.random.default_rng(31)
    for _ in range(20):
        true_lp = rng.normal(-2.4, 0.75, size=50_000)
        outcomes = (rng.random(true_lp.size) < expit(true_lp)).astype(np.int8)
        fitted_lp = 1.1 * true_lp + rng.normal(0.0, 0.2, size=true_lp.size)

        fit = fit_calibration(outcomes, fitted_lp)

        assert 0.7 < fit.slope < 1.1
        assert abs(calibration_in_large(outcomes, fitted_lp)) < 1.0


def test_fit_calibration_slope_is_affine_equivariant() -> None:
    rng = np.random.default_rng(13)
    lp = rng.normal(-1.0, 1.0, size=5000)
    outcomes = (rng.random(lp.size) < expit(0.8 * lp)).astype(np.int8)
    base = fit_calibration(outcomes, lp)

    for a, b in ((0.5, 2.0), (-1.0, 0.25), (3.0, 4.0)):
        moved = fit_calibration(outcomes, a + b * lp)
        assert moved.slope == pytest.approx(base.slope / b, rel=1e-7)
        assert moved.intercept == pytest.approx(base.intercept - a * base.slope / b, abs=1e-6)


def test_fit_calibration_constant_predictor() -> None:
    with pytest.raises(ConstantPredictor):
        fit_calibration([0, 1, 0], [0.3, 0.3, 0.3])


def test_concordance_matches_pairwise_count() -> None:
    rng = np.random.default_rng(5)
    outcomes = rng.integers(0, 2, size=60)
    outcomes[:2] = [0, 1]
    scores = rng.integers(0, 8, size=60).astype(float)
    assert concordance(outcomes, scores) == pytest.approx(_brute_force_c(outcomes, scores))


def test_concordance_examples() -> None:
    assert concordance([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == pytest.approx(0.75)
    assert concordance([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == pytest.approx(0.5)


def test_concordance_is_rank_invariant_and_antisymmetric() -> None:
    rng = np.random.default_rng(17)
    outcomes = rng.integers(0, 2, size=400)
    outcomes[:2] = [0, 1]
    scores = np.round(rng.standard_normal(400), 1)
    c = concordance(outcomes, scores)

    assert concordance(outcomes, np.exp(scores)) == pytest.approx(c, abs=1e-12)
    assert concordance(outcomes, scores**3 + 2.0 * scores) == pytest.approx(c, abs=1e-12)
    assert c + concordance(outcomes, -scores) == pytest.approx(1.0, abs=1e-12)


def test_concordance_needs_both_classes() -> None:
    with pytest.raises(DegenerateOutcome):
        concordance([1, 1, 1], [0.1, 0.2, 0.3])


def test_brier_and_mape_examples() -> None:
    assert brier([0, 1, 1, 0], [0.1, 0.9, 0.6, 0.2]) == pytest.approx(0.055)
    assert mape([0.1, 0.5], [0.2, 0.3]) == pytest.approx(0.15)
    with pytest.raises(ValidationError):
        brier([0, 1], [0.2, 1.4])


def test_brier_is_smallest_for_true_probabilities() -> None:
    rng = np.random.default_rng(23)
    lp = rng.normal(-2.0, 0.9, size=200_000)
    truth = expit(lp)
    outcomes = (rng.random(lp.size) < truth).astype(np.int8)

    for other in (expit(1.3 * lp), expit(0.7 * lp), expit(lp + 0.2), np.full(lp.size, 0.15)):
        loss_gap = (other - outcomes) ** 2 - (truth - outcomes) ** 2
        mcse = float(np.std(loss_gap)) / math.sqrt(lp.size)
        assert brier(outcomes, truth) <= brier(outcomes, other) + 3.0 * mcse


def test_measure_all_reports_every_measure() -> None:
    data = _simulated(n=5000)
    model = fit_logistic(data)
    measures = measure_all(data, model)

    assert measures.cal_slope == pytest.approx(1.0, abs=1e-6)
    assert measures.cal_in_large == pytest.approx(0.0, abs=1e-6)
    assert 0.5 < measures.c_stat < 1.0
    assert measures.mape is not None and measures.mape < 0.05


def test_measure_all_rejects_covariate_mismatch() -> None:
    data = _simulated(p=3)
    model = FittedLogistic(
        intercept=0.0, slopes=np.zeros(2), converged=True, iterations=1, max_abs_score=0.0
    )
    with pytest.raises(ValidationError, match="covariates"):
        measure_all(data, model)
