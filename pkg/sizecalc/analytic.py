"""Closed-form sample sizes for the calibration slope.

``n_for_expected_slope`` is the standard shrinkage-based formula, ``slope_variance``
the large-sample variance of the calibration slope, and ``prap_normal`` the
normal approximation to the probability that the slope lands in an interval.
``analytic_n_for_prap`` chains the three into a monotone root find.
"""

from __future__ import annotations

import logging
import math

from scipy.optimize import bisect, brentq
from scipy.special import ndtr, ndtri

from sizecalc.config import get_settings
from sizecalc.exceptions import DomainError, NoConvergence, NoRoot, ValidationError
from sizecalc.schemas import AcceptanceInterval, AnalyticResult, DgmDerived, TrueModelSpec

LOGGER = logging.getLogger(__name__)

MAX_EXPECTED_SLOPE = 0.9999
PRAP_TOL = 1e-4


def _raw_n(p: int, r2_cs: float, expected_slope: float) -> float:
    return p / ((expected_slope - 1.0) * math.log(1.0 - r2_cs / expected_slope))


def n_for_expected_slope(p: int, r2_cs: float, target_es: float) -> float:
    """Unrounded development size giving an expected calibration slope of ``target_es``."""
    if p < 1:
        raise DomainError("n_for_expected_slope: predictors must be at least 1")
    if not 0.0 < target_es < 1.0:
        raise DomainError(f"n_for_expected_slope: target slope {target_es} outside (0,1)")
    if not 0.0 < r2_cs < target_es:
        raise DomainError(
            f"n_for_expected_slope: R2_CS {r2_cs} must lie in (0, target slope {target_es})"
        )
    return _raw_n(p, r2_cs, target_es)


def expected_slope_at_n(p: int, r2_cs: float, n: float) -> float:
    """Invert ``n_for_expected_slope`` in the slope: E in (r2_cs, 1) with n(E) = n."""
    if not 0.0 < r2_cs < 1.0:
        raise DomainError(f"expected_slope_at_n: R2_CS {r2_cs} outside (0,1)")
    if n <= p:
        raise NoRoot(f"expected_slope_at_n: n={n} must exceed the {p} predictors")
    lo = r2_cs + 1e-12 * max(1.0, r2_cs)
    hi = 1.0 - 1e-12
    return float(bisect(lambda e: _raw_n(p, r2_cs, e) - n, lo, hi, xtol=1e-12, maxiter=200))


def slope_variance(expected_slope: float, phi: float, c_for_variance: float, n: float) -> float:
    """Large-sample variance of the calibration slope at development size n."""
    if not 0.0 < phi < 1.0:
        raise DomainError(f"slope_variance: prevalence {phi} outside (0,1)")
    if not 0.5 < c_for_variance < 1.0:
        raise DomainError(f"slope_variance: C {c_for_variance} outside (0.5,1)")
    if n < 1:
        raise DomainError("slope_variance: n must be at least 1")
    squared = expected_slope**2
    z = float(ndtri(c_for_variance))
    return squared / (2.0 * phi * (1.0 - phi) * n * z * z) + 2.0 * squared / n


def prap_normal(expected_slope: float, variance: float, interval: AcceptanceInterval) -> float:
    """Normal-approximation probability that the slope falls inside ``interval``."""
    if variance <= 0:
        raise DomainError("prap_normal: variance must be positive")
    sd = math.sqrt(variance)
    below = ndtr((interval.lower - expected_slope) / sd)
    above = ndtr((expected_slope - interval.upper) / sd)
    return float(1.0 - (below + above))


def _use_adjustment(spec: TrueModelSpec, adjust: bool | None) -> bool:
    if adjust is not None:
        return adjust
    return spec.c_stat >= get_settings().adjust_threshold


def _inputs(
    spec: TrueModelSpec, derived: DgmDerived, adjust: bool | None
) -> tuple[bool, float, float, float]:
    adjusted = _use_adjustment(spec, adjust)
    if adjusted:
        return adjusted, derived.r2_cs_adjusted, derived.c_adj, derived.c_adj_single
    return adjusted, derived.r2_cs, spec.c_stat, spec.c_stat


def analytic_n_for_prap(
    spec: TrueModelSpec,
    interval: AcceptanceInterval,
    target_prap: float,
    derived: DgmDerived,
    adjust: bool | None = None,
) -> AnalyticResult:
    """Smallest n whose approximate PrAP reaches ``target_prap``.

    Solves PrAP(E) = target over the expected slope E, where n(E) comes from
    the expected-slope formula and the slope variance is evaluated at n(E).
    Adjusted inputs are used when ``adjust`` is true, or by default when the
    C-statistic is at or above the configured threshold.
    """
    if not 0.0 < target_prap < 1.0:
        raise ValidationError("target PrAP must be in (0,1)")
    adjusted, r2_cs, used_c, c_variance = _inputs(spec, derived, adjust)
    p, phi = spec.n_predictors, spec.prevalence

    def gap(expected_slope: float) -> float:
        n = max(_raw_n(p, r2_cs, expected_slope), 1.0)
        variance = slope_variance(expected_slope, phi, c_variance, n)
        return prap_normal(expected_slope, variance, interval) - target_prap

    hi = MAX_EXPECTED_SLOPE
    lo = max(r2_cs, 0.5) * (1.0 + 1e-9)
    if lo >= hi:
        raise NoConvergence(f"analytic_n_for_prap: R2_CS {r2_cs} leaves no slope bracket", (lo, hi))
    try:
        if gap(lo) > 0:
            # wide intervals can already pass at E=0.5; search down to R2_CS
            lo = r2_cs * (1.0 + 1e-9)
        gap_lo, gap_hi = gap(lo), gap(hi)
    except DomainError as exc:
        raise NoConvergence(f"analytic_n_for_prap: {exc.detail}", (lo, hi)) from exc
    if gap_lo > 0 or gap_hi < 0:
        raise NoConvergence(
            f"analytic_n_for_prap: PrAP target {target_prap} not bracketed "
            f"(gaps {gap_lo:.4g}, {gap_hi:.4g})",
            (lo, hi),
        )
    expected_slope = float(brentq(gap, lo, hi, xtol=1e-12, maxiter=200))
    if abs(gap(expected_slope)) >= PRAP_TOL:
        raise NoConvergence("analytic_n_for_prap: root residual above tolerance", (lo, hi))

    n_real = _raw_n(p, r2_cs, expected_slope)
    variance = slope_variance(expected_slope, phi, c_variance, n_real)
    result = AnalyticResult(
        n=max(math.ceil(n_real), p + 1),
        expected_slope=expected_slope,
        slope_sd=math.sqrt(variance),
        prap=prap_normal(expected_slope, variance, interval),
        used_c=used_c,
        used_c_variance=c_variance,
        r2_cs=r2_cs,
        adjusted=adjusted,
    )
    LOGGER.info(
        "analytic prap size",
        extra={"event": "analytic_prap", "context": result.model_dump()},
    )
    return result


def analytic_n_for_expected(
    spec: TrueModelSpec,
    target_es: float,
    derived: DgmDerived,
    adjust: bool | None = None,
    interval: AcceptanceInterval | None = None,
) -> AnalyticResult:
    """Size for an expected calibration slope, with variance and PrAP diagnostics at that n."""
    interval = interval or AcceptanceInterval()
    adjusted, r2_cs, used_c, c_variance = _inputs(spec, derived, adjust)
    n_real = n_for_expected_slope(spec.n_predictors, r2_cs, target_es)
    n = max(math.ceil(n_real), spec.n_predictors + 1)
    variance = slope_variance(target_es, spec.prevalence, c_variance, n)
    return AnalyticResult(
        n=n,
        expected_slope=target_es,
        slope_sd=math.sqrt(variance),
        prap=prap_normal(target_es, variance, interval),
        used_c=used_c,
        used_c_variance=c_variance,
        r2_cs=r2_cs,
        adjusted=adjusted,
    )
