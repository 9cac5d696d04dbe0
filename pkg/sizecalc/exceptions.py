"""Domain exceptions for calculation failures."""

from __future__ import annotations

from typing import Any


class SizeCalcError(Exception):
    """Base domain exception with CLI exit-code mapping metadata."""

    def __init__(self, detail: Any, exit_code: int = 3) -> None:
        super().__init__(detail)
        self.detail = detail
        self.exit_code = exit_code


class ValidationError(SizeCalcError):
    """Raised when user input is invalid."""

    def __init__(self, detail: Any) -> None:
        super().__init__(detail=detail, exit_code=2)


class NonConvergence(SizeCalcError):
    """IRLS hit its iteration cap or diverged (e.g. separation)."""


class DegenerateOutcome(SizeCalcError):
    """Outcome vector has no events or no non-events."""


class ConstantPredictor(SizeCalcError):
    """A predictor column (or the supplied linear predictor) does not vary."""


class DomainError(SizeCalcError):
    """A closed-form expression was evaluated outside its domain."""


class NoSolution(SizeCalcError):
    """No data-generating mechanism realizes the requested prevalence and C."""


class NonMonotone(SizeCalcError):
    """A bracket did not show the sign change a monotone root find needs."""


class NoRoot(SizeCalcError):
    """An inversion has no root for the requested input."""


class NoConvergence(SizeCalcError):
    """The analytic sample-size search did not converge."""

    def __init__(self, detail: Any, bracket: tuple[float, float] | None = None) -> None:
        super().__init__(detail=detail)
        self.bracket = bracket


class CalibrationFailure(SizeCalcError):
    """The data-generating mechanism could not be calibrated for a simulation."""


class EmptyDistribution(SizeCalcError):
    """A performance distribution has no successful replicates."""


class NonPositiveDefinite(SizeCalcError):
    """A coefficient covariance matrix is not positive definite."""


class BracketFailure(SizeCalcError):
    """Stochastic sample-size search could not bracket its target."""

    def __init__(self, detail: Any, probes: list[tuple[int, float]] | None = None) -> None:
        super().__init__(detail=detail)
        self.probes = list(probes or [])


class ExcessiveFailures(SizeCalcError):
    """Too many replicates or bootstraps failed to produce a usable fit."""

    def __init__(self, detail: Any, n_failed: int, n_total: int) -> None:
        super().__init__(detail=detail, exit_code=4)
        self.n_failed = n_failed
        self.n_total = n_total
