"""Pytest config for local module imports and shared factories."""

from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from sizecalc.config import get_settings  # noqa: E402
from sizecalc.logging import JsonFormatter  # noqa: E402
from sizecalc.montecarlo import PerformanceDistribution  # noqa: E402
from sizecalc.schemas import DgmDerived, FitMethod  # noqa: E402

DistributionFactory = Callable[..., PerformanceDistribution]


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    for name in (
        "SIZECALC_SEED",
        "SIZECALC_LOG_LEVEL",
        "SIZECALC_METRICS_PATH",
        "SIZECALC_WORKERS",
        "SIZECALC_N_SIM",
        "SIZECALC_N_VAL",
        "SIZECALC_MC_SIZE",
        "SIZECALC_LSF_BOOTSTRAPS",
        "SIZECALC_ADJUST_THRESHOLD",
    ):
        monkeypatch.delenv(name, raising=False)
    root = logging.getLogger()
    level = root.level
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    for handler in list(root.handlers):
        if isinstance(handler.formatter, JsonFormatter):
            root.removeHandler(handler)
    root.setLevel(level)


@pytest.fixture
def make_distribution() -> DistributionFactory:
    """Build a PerformanceDistribution from calibration slopes (other measures constant)."""

    def factory(
        slopes: list[float] | np.ndarray,
        n: int = 500,
        seed: int = 1,
        lsf: list[float] | None = None,
        fit_method: FitMethod = FitMethod.MLE,
    ) -> PerformanceDistribution:
        values = np.asarray(slopes, dtype=float)
        count = values.size
        return PerformanceDistribution(
            n=n,
            seed=seed,
            n_total=count,
            n_failed=0,
            fit_method=fit_method,
            replicate_index=np.arange(count, dtype=np.int64),
            cal_slope=values,
            c_stat=np.full(count, 0.7),
            brier=np.full(count, 0.08),
            mape=np.full(count, 0.01),
            cal_in_large=np.zeros(count),
            lsf=None if lsf is None else np.asarray(lsf, dtype=float),
        )

    return factory


@pytest.fixture
def derived_base() -> DgmDerived:
    """Summaries for prevalence 0.1, C 0.7 (no adjustment in play)."""
    return DgmDerived(
        r2_cs=0.0466,
        c_adj=0.696,
        c_adj_single=0.698,
        r2_cs_adjusted=0.0458,
        mc_size=1_000_000,
        seed=1,
    )
