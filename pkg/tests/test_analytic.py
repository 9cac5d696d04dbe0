"""Closed-form sample-size and slope-variance tests."""

from __future__ import annotations

import math

import pytest
from scipy.special import ndtr

from sizecalc.analytic import (
    analytic_n_for_expected,
    analytic_n_for_prap,
    expected_slope_at_n,
    n_for_expected_slope,
    prap_normal,
    slope_variance,
)
from sizecalc.dgm import derive
from sizecalc.exceptions import DomainError, NoConvergence, NoRoot, ValidationError
from sizecalc.schemas import AcceptanceInterval, DgmDerived, TrueModelSpec

BASE = TrueModelSpec(prevalence=0.1, c_stat=0.7, n_predictors=10)
DEFAULT_INTERVAL = AcceptanceInterval()


def test_expected_slope_formula_examples() -> None:
    assert math.ceil(n_for_expected_slope(10, 0.0466, 0.9)) == 1881
    assert math.ceil(n_for_expected_slope(10, 0.0256, 0.9)) == 3466


def test_expected_slope_formula_scales_with_predictors() -> None:
    single = n_for_expected_slope(10, 0.05, 0.9)
    assert n_for_expected_slope(20, 0.05, 0.9) == pytest.approx(2.0 * single, rel=1e-12)


@pytest.mark.parametrize(
    ("p", "r2_cs", "target"),
    [(0, 0.05, 0.9), (10, 0.05, 1.0), (10, 0.0, 0.9), (10, 0.95, 0.9)],
)
def test_expected_slope_formula_domain(p: int, r2_cs: float, target: float) -> None:
    with pytest.raises(DomainError):
        n_for_expected_slope(p, r2_cs, target)


def test_expected_slope_inversion_round_trip() -> None:
    for target in (0.8, 0.9, 0.95):
        n = n_for_expected_slope(10, 0.0466, target)
        assert expected_slope_at_n(10, 0.0466, n) == pytest.approx(target, abs=1e-6)


def test_expected_slope_at_published_prap_size() -> None:
    assert expected_slope_at_n(10, 0.0466, 2597) == pytest.approx(0.92, abs=0.01)


def test_expected_slope_needs_more_rows_than_predictors() -> None:
    with pytest.raises(NoRoot):
        expected_slope_at_n(10, 0.0466, 10)


def test_slope_variance_examples() -> None:
    assert slope_variance(1.0, 0.5, 0.7, 1000) == pytest.approx(0.0092728, abs=1e-6)
    assert math.sqrt(slope_variance(0.93, 0.1, 0.7, 2529)) == pytest.approx(0.0871, abs=2e-4)


def test_slope_variance_scales_inversely_with_n() -> None:
    base = slope_variance(0.9, 0.2, 0.75, 500) * 500
    for n in (800, 3000, 12_000):
        assert slope_variance(0.9, 0.2, 0.75, n) * n == pytest.approx(base, rel=1e-12)


def test_slope_variance_undefined_at_chance_c() -> None:
    with pytest.raises(DomainError):
        slope_variance(0.9, 0.1, 0.5, 1000)


def test_prap_normal_example() -> None:
    assert prap_normal(0.93, 0.0871**2, DEFAULT_INTERVAL) == pytest.approx(0.815, abs=0.001)


def test_prap_normal_centred_and_tight() -> None:
    expected = 1.0 - 2.0 * float(ndtr(-1.5))
    assert prap_normal(1.0, 0.01, DEFAULT_INTERVAL) == pytest.approx(expected, abs=1e-12)
    assert prap_normal(1.0, 1e-8, DEFAULT_INTERVAL) == pytest.approx(1.0, abs=1e-12)


def test_analytic_prap_base_scenario(derived_base: DgmDerived) -> None:
    result = analytic_n_for_prap(BASE, DEFAULT_INTERVAL, 0.8, derived_base)

    assert 2490 <= result.n <= 2650
    assert result.prap == pytest.approx(0.8, abs=1e-4)
    assert result.adjusted is False
    assert result.used_c == 0.7
    assert result.expected_slope > 0.9


@pytest.mark.parametrize(
    ("r2_cs", "expected_n"), [(0.0466, 2544), (0.04692, 2534), (0.04724, 2524)]
)
def test_analytic_prap_base_scenario_across_r2_estimates(
    derived_base: DgmDerived, r2_cs: float, expected_n: int
) -> None:
    # Every plausible R2 estimate for this scenario stays below the published 2597.
    derived = derived_base.model_copy(update={"r2_cs": r2_cs})

    result = analytic_n_for_prap(BASE, DEFAULT_INTERVAL, 0.8, derived)

    assert result.n == expected_n
    assert result.n < 2597 * 0.98


def test_analytic_prap_wider_interval_needs_fewer_rows(derived_base: DgmDerived) -> None:
    narrow = analytic_n_for_prap(BASE, DEFAULT_INTERVAL, 0.8, derived_base)
    wide = analytic_n_for_prap(
        BASE, AcceptanceInterval(lower=0.8, upper=1.2), 0.8, derived_base
    )
    assert wide.n < narrow.n


def test_analytic_prap_unreachable_interval(derived_base: DgmDerived) -> None:
    with pytest.raises(NoConvergence) as caught:
        analytic_n_for_prap(BASE, AcceptanceInterval(lower=0.85, upper=0.86), 0.9, derived_base)
    assert caught.value.bracket is not None


def test_analytic_prap_rejects_target(derived_base: DgmDerived) -> None:
    with pytest.raises(ValidationError):
        analytic_n_for_prap(BASE, DEFAULT_INTERVAL, 1.0, derived_base)


def test_analytic_expected_base_scenario(derived_base: DgmDerived) -> None:
    result = analytic_n_for_expected(BASE, 0.9, derived_base)

    assert result.n == 1881
    assert result.expected_slope == 0.9
    assert 0.0 < result.prap < 1.0


def test_adjustment_switches_inputs() -> None:
    spec = BASE.with_c(0.85)
    derived = DgmDerived(
        r2_cs=0.1270, c_adj=0.802, c_adj_single=0.83, r2_cs_adjusted=0.0960, mc_size=100_000, seed=1
    )

    automatic = analytic_n_for_expected(spec, 0.9, derived)
    assert automatic.adjusted is True
    assert automatic.used_c == 0.802
    assert automatic.used_c_variance == 0.83
    assert automatic.r2_cs == 0.0960

    forced_off = analytic_n_for_expected(spec, 0.9, derived, adjust=False)
    assert forced_off.adjusted is False
    assert forced_off.used_c == 0.85
    assert forced_off.n < automatic.n


@pytest.mark.slow
def test_analytic_prap_from_simulated_summaries() -> None:
    result = analytic_n_for_prap(BASE, DEFAULT_INTERVAL, 0.8, derive(BASE))
    assert 2490 <= result.n <= 2650


@pytest.mark.slow
def test_case_study_analytic_prap() -> None:
    spec = TrueModelSpec(prevalence=0.06973, c_stat=0.731, n_predictors=11)
    result = analytic_n_for_prap(spec, DEFAULT_INTERVAL, 0.8, derive(spec))
    assert result.n == pytest.approx(2788, rel=0.04)
