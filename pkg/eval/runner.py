"""Reproduction runner: regenerates published tables and figure series as CSV.

Each target writes ``<what>.csv`` and ``meta.json`` (seeds, budgets, anchor
checks) into the output directory. Figures are emitted as CSV series only.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from sizecalc import __version__  # noqa: E402
from sizecalc.analytic import (  # noqa: E402
    analytic_n_for_expected,
    analytic_n_for_prap,
    slope_variance,
)
from sizecalc.config import DEFAULT_SEED  # noqa: E402
from sizecalc.dgm import derive  # noqa: E402
from sizecalc.exceptions import SizeCalcError, ValidationError  # noqa: E402
from sizecalc.montecarlo import (  # noqa: E402
    find_n_expected,
    find_n_prap,
    simulate_performance,
    summarize,
)
from sizecalc.schemas import (  # noqa: E402
    AcceptanceInterval,
    DgmDerived,
    FitMethod,
    SimulationConfig,
    TrueModelSpec,
)
from sizecalc.shrinkage import shrinkage_experiment  # noqa: E402

LOGGER = logging.getLogger(__name__)
UTC = timezone.utc

TARGETS = ("table2", "table3", "fig1", "fig2", "fig3", "fig4", "case")
BASE_PREVALENCE = 0.1
BASE_C = 0.7
FIGURE_PREDICTORS = (4, 5, 6, 8, 10, 12, 16, 20)
SHRINKAGE_PREDICTORS = (5, 10, 20)
TABLE2_C_VALUES = (0.65, 0.7, 0.75, 0.8, 0.85, 0.9)
TABLE3_PREDICTORS = (5, 10, 20)
TABLE3_PREVALENCES = (0.1, 0.3, 0.5)
TABLE3_FRACTIONS = (0.5, 0.75, 1.0)
CASE_PREVALENCE = 0.06973
CASE_C = 0.731
CASE_PREDICTORS = 11
CASE_NOTE = (
    "case-study prevalence taken as 0.06973 (6.973%); one passage of the source "
    "writes 0.6973, treated as a typo"
)


@dataclass(frozen=True)
class Budget:
    n_sim: int | None
    n_val: int
    mc_size: int
    lsf_bootstraps: int


BUDGETS = {
    "quick": Budget(n_sim=500, n_val=20_000, mc_size=200_000, lsf_bootstraps=50),
    "paper": Budget(n_sim=None, n_val=50_000, mc_size=1_000_000, lsf_bootstraps=200),
}


@dataclass(frozen=True)
class Anchor:
    """Published value with its tolerance at full and reduced budget."""

    expected: float
    tolerance: float
    quick_tolerance: float
    relative: bool = False
    comparator: str = "within"


ANCHORS: dict[str, dict[str, Anchor]] = {
    "table2": {
        **{
            f"n_original_c{c}": Anchor(n, 0.03, 0.03, relative=True)
            for c, n in zip(TABLE2_C_VALUES, (3466, 1881, 1156, 762, 523, 365))
        },
        **{
            f"n_adjusted_c{c}": Anchor(n, 0.03, 0.03, relative=True)
            for c, n in zip(TABLE2_C_VALUES, (3700, 2073, 1365, 971, 749, 597))
        },
        **{
            f"c_adj_c{c}": Anchor(value, 0.005, 0.01)
            for c, value in zip(TABLE2_C_VALUES, (0.645, 0.691, 0.732, 0.770, 0.802, 0.832))
        },
        **{
            f"es_adjusted_c{c}": Anchor(value, 0.02, 0.02)
            for c, value in zip(TABLE2_C_VALUES, (0.909, 0.903, 0.907, 0.900, 0.896, 0.880))
        },
    },
    "table3": {
        f"sd_ratio_p{p}_prev0.1": Anchor(1.0, 0.05, 0.07) for p in TABLE3_PREDICTORS
    },
    "fig1": {
        "prap_p5": Anchor(0.50, 0.05, 0.07),
        "prap_p12": Anchor(0.70, 0.05, 0.07),
    },
    "fig2": {"ratio_p6": Anchor(1.98, 0.10, 0.15)},
    "fig3": {"n_analytic_p10": Anchor(2597, 0.03, 0.03, relative=True)},
    "fig4": {
        "prap_lsf_standard_p10": Anchor(0.80, 0.05, 0.07),
        "lsf_gain_standard_p10": Anchor(0.0, 0.0, 0.0, comparator=">="),
    },
    "case": {
        "n_standard_simulation": Anchor(1997, 0.05, 0.05, relative=True),
        "n_new_simulation": Anchor(2791, 0.05, 0.05, relative=True),
        "n_new_analytic": Anchor(2788, 0.04, 0.04, relative=True),
    },
}


@dataclass
class RunContext:
    budget_name: str
    seed: int
    workers: int

    @property
    def budget(self) -> Budget:
        return BUDGETS[self.budget_name]

    def config(self, **overrides: Any) -> SimulationConfig:
        values: dict[str, Any] = {
            "n_sim": self.budget.n_sim,
            "n_val": self.budget.n_val,
            "mc_size": self.budget.mc_size,
            "lsf_bootstraps": self.budget.lsf_bootstraps,
            "seed": self.seed,
            "workers": self.workers,
        }
        values.update(overrides)
        return SimulationConfig(**values)

    def derived(self, spec: TrueModelSpec) -> DgmDerived:
        return derive(spec, self.budget.mc_size, self.seed)


Rows = list[dict[str, Any]]
Observed = dict[str, float]


def _spec(p: int, prevalence: float = BASE_PREVALENCE, c_stat: float = BASE_C) -> TrueModelSpec:
    return TrueModelSpec(prevalence=prevalence, c_stat=c_stat, n_predictors=p)


def run_table2(ctx: RunContext) -> tuple[Rows, Observed]:
    """Sizes from the actual and adjusted C, with simulated mean slopes at both."""
    rows: Rows = []
    observed: Observed = {}
    config = ctx.config()
    for c_stat in TABLE2_C_VALUES:
        spec = _spec(10, c_stat=c_stat)
        derived = ctx.derived(spec)
        original = analytic_n_for_expected(spec, 0.9, derived, adjust=False)
        adjusted = analytic_n_for_expected(spec, 0.9, derived, adjust=True)
        es_original = summarize(simulate_performance(spec, original.n, config), "cal_slope").mean
        es_adjusted = summarize(simulate_performance(spec, adjusted.n, config), "cal_slope").mean
        rows.append(
            {
                "c": c_stat,
                "c_adj": round(derived.c_adj, 4),
                "r2_cs": round(derived.r2_cs, 5),
                "r2_cs_adjusted": round(derived.r2_cs_adjusted, 5),
                "n_original": original.n,
                "n_adjusted": adjusted.n,
                "es_original": round(es_original, 4),
                "es_adjusted": round(es_adjusted, 4),
            }
        )
        observed[f"n_original_c{c_stat}"] = original.n
        observed[f"n_adjusted_c{c_stat}"] = adjusted.n
        observed[f"c_adj_c{c_stat}"] = derived.c_adj
        observed[f"es_adjusted_c{c_stat}"] = es_adjusted
    return rows, observed


def run_table3(ctx: RunContext) -> tuple[Rows, Observed]:
    """Simulated versus approximate slope SD at fractions of the simulated PrAP=0.8 size."""
    rows: Rows = []
    observed: Observed = {}
    interval = AcceptanceInterval()
    config = ctx.config()
    for p in TABLE3_PREDICTORS:
        for prevalence in TABLE3_PREVALENCES:
            spec = _spec(p, prevalence=prevalence)
            search = find_n_prap(spec, interval, 0.8, config, ctx.derived(spec))
            full_n = search.n
            for fraction in TABLE3_FRACTIONS:
                n = max(math.ceil(fraction * full_n), p + 2)
                summary = summarize(simulate_performance(spec, n, config), "cal_slope")
                sd_approx = math.sqrt(slope_variance(summary.mean, prevalence, BASE_C, n))
                ratio = summary.sd / sd_approx
                rows.append(
                    {
                        "p": p,
                        "prevalence": prevalence,
                        "fraction": fraction,
                        "n": n,
                        "expected_slope": round(summary.mean, 4),
                        "sd_sim": round(summary.sd, 4),
                        "sd_approx": round(sd_approx, 4),
                        "ratio": round(ratio, 3),
                        "search_converged": search.converged,
                    }
                )
                if fraction == 1.0 and prevalence == BASE_PREVALENCE:
                    observed[f"sd_ratio_p{p}_prev0.1"] = ratio
    return rows, observed


def run_fig1(ctx: RunContext) -> tuple[Rows, Observed]:
    """Slope distribution at the standard (E(s)=0.9) size across predictor counts."""
    rows: Rows = []
    observed: Observed = {}
    interval = AcceptanceInterval()
    config = ctx.config()
    for p in FIGURE_PREDICTORS:
        spec = _spec(p)
        n = analytic_n_for_expected(spec, 0.9, ctx.derived(spec)).n
        summary = summarize(simulate_performance(spec, n, config), "cal_slope", interval)
        rows.append(
            {
                "p": p,
                "n": n,
                "mean_slope": round(summary.mean, 4),
                "sd_slope": round(summary.sd, 4),
                "lower_95": round(summary.mean - 1.96 * summary.sd, 4),
                "upper_95": round(summary.mean + 1.96 * summary.sd, 4),
                "prap": summary.prap,
                "mcse_prap": summary.mcse_prap,
            }
        )
        observed[f"prap_p{p}"] = float(summary.prap or 0.0)
    return rows, observed


def run_fig2(ctx: RunContext) -> tuple[Rows, Observed]:
    """Standard versus PrAP=0.8 sizes by simulation, with the slope spread at the new size."""
    rows: Rows = []
    observed: Observed = {}
    interval = AcceptanceInterval()
    config = ctx.config()
    for p in FIGURE_PREDICTORS:
        spec = _spec(p)
        derived = ctx.derived(spec)
        standard = analytic_n_for_expected(spec, 0.9, derived).n
        search = find_n_prap(spec, interval, 0.8, config, derived)
        summary = summarize(simulate_performance(spec, search.n, config), "cal_slope", interval)
        ratio = search.n / standard
        rows.append(
            {
                "p": p,
                "n_standard": standard,
                "n_new": search.n,
                "ratio": round(ratio, 3),
                "mean_slope_new": round(summary.mean, 4),
                "lower_95_new": round(summary.mean - 1.96 * summary.sd, 4),
                "upper_95_new": round(summary.mean + 1.96 * summary.sd, 4),
                "search_converged": search.converged,
            }
        )
        observed[f"ratio_p{p}"] = ratio
    return rows, observed


def run_fig3(ctx: RunContext) -> tuple[Rows, Observed]:
    """Analytic versus simulated PrAP=0.8 sizes, and simulated PrAP at the analytic size."""
    rows: Rows = []
    observed: Observed = {}
    interval = AcceptanceInterval()
    config = ctx.config()
    for p in FIGURE_PREDICTORS:
        spec = _spec(p)
        derived = ctx.derived(spec)
        analytic = analytic_n_for_prap(spec, interval, 0.8, derived)
        search = find_n_prap(spec, interval, 0.8, config, derived)
        at_analytic = summarize(
            simulate_performance(spec, analytic.n, config), "cal_slope", interval
        )
        rows.append(
            {
                "p": p,
                "n_analytic": analytic.n,
                "n_simulation": search.n,
                "prap_at_analytic_n": at_analytic.prap,
                "mcse_prap": at_analytic.mcse_prap,
            }
        )
        observed[f"n_analytic_p{p}"] = analytic.n
    return rows, observed


def run_fig4(ctx: RunContext) -> tuple[Rows, Observed]:
    """MLE versus MLE+LSF at the standard and PrAP=0.8 sizes."""
    rows: Rows = []
    observed: Observed = {}
    interval = AcceptanceInterval()
    config = ctx.config()
    for p in SHRINKAGE_PREDICTORS:
        spec = _spec(p)
        comparison = shrinkage_experiment(spec, config, interval, derived=ctx.derived(spec))
        for record in comparison.as_records():
            rows.append({"p": p, **record})
        if p == 10:
            lsf = comparison.rows[("standard", FitMethod.MLE_LSF)]
            mle = comparison.rows[("standard", FitMethod.MLE)]
            observed["prap_lsf_standard_p10"] = float(lsf.prap or 0.0)
            observed["lsf_gain_standard_p10"] = float((lsf.prap or 0.0) - (mle.prap or 0.0))
    return rows, observed


def run_case(ctx: RunContext) -> tuple[Rows, Observed]:
    """Case-study sizes: standard and PrAP=0.8, analytic and simulated."""
    spec = _spec(CASE_PREDICTORS, prevalence=CASE_PREVALENCE, c_stat=CASE_C)
    interval = AcceptanceInterval()
    config = ctx.config()
    derived = ctx.derived(spec)
    values = {
        "n_standard_analytic": analytic_n_for_expected(spec, 0.9, derived).n,
        "n_standard_simulation": find_n_expected(spec, 0.9, config, derived).n,
        "n_new_analytic": analytic_n_for_prap(spec, interval, 0.8, derived).n,
        "n_new_simulation": find_n_prap(spec, interval, 0.8, config, derived).n,
    }
    rows = [{"quantity": key, "n": value} for key, value in values.items()]
    return rows, {key: float(value) for key, value in values.items()}


RUNNERS: dict[str, Callable[[RunContext], tuple[Rows, Observed]]] = {
    "table2": run_table2,
    "table3": run_table3,
    "fig1": run_fig1,
    "fig2": run_fig2,
    "fig3": run_fig3,
    "fig4": run_fig4,
    "case": run_case,
}


def check_anchors(
    observed: Observed,
    anchors: dict[str, Anchor],
    budget: str = "paper",
) -> dict[str, dict[str, Any]]:
    """Compare observed values with published anchors under the budget's tolerance."""
    results: dict[str, dict[str, Any]] = {}
    for name, anchor in anchors.items():
        tolerance = anchor.quick_tolerance if budget == "quick" else anchor.tolerance
        band = tolerance * abs(anchor.expected) if anchor.relative else tolerance
        actual = observed.get(name)
        if actual is None:
            results[name] = {
                "expected": anchor.expected,
                "actual": None,
                "tolerance": band,
                "comparator": anchor.comparator,
                "passed": False,
            }
            continue
        if anchor.comparator == ">=":
            passed = float(actual) >= anchor.expected
        else:
            passed = abs(float(actual) - anchor.expected) <= band
        results[name] = {
            "expected": anchor.expected,
            "actual": float(actual),
            "tolerance": band,
            "comparator": anchor.comparator,
            "passed": passed,
        }
    return results


def _write_csv(path: Path, rows: Rows) -> None:
    if not rows:
        raise SizeCalcError(f"reproduce: no rows produced for {path.name}")
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def reproduce(
    what: str,
    out_dir: Path,
    budget: str = "quick",
    seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> dict[str, Any]:
    """Run one reproduction target; on failure, remove anything it wrote."""
    if what not in RUNNERS:
        raise ValidationError(f"unknown reproduction target {what!r}")
    if budget not in BUDGETS:
        raise ValidationError(f"unknown budget {budget!r}")
    ctx = RunContext(budget_name=budget, seed=seed, workers=workers)
    csv_path = out_dir / f"{what}.csv"
    meta_path = out_dir / "meta.json"
    written: list[Path] = []
    try:
        rows, observed = RUNNERS[what](ctx)
        out_dir.mkdir(parents=True, exist_ok=True)
        written.append(csv_path)
        _write_csv(csv_path, rows)
        anchors = ANCHORS.get(what, {})
        meta: dict[str, Any] = {
            "what": what,
            "budget": budget,
            "budget_values": asdict(ctx.budget),
            "seed": seed,
            "workers": workers,
            "tolerances": {
                name: {**asdict(anchor), "applied": "quick" if budget == "quick" else "paper"}
                for name, anchor in anchors.items()
            },
            "anchors": check_anchors(observed, anchors, budget),
            "notes": [CASE_NOTE] if what == "case" else [],
            "version": __version__,
            "generated_at": datetime.now(UTC).isoformat(),
        }
        written.append(meta_path)
        meta_path.write_text(json.dumps(meta, indent=2, default=str), encoding="utf-8")
    except (SizeCalcError, OSError) as exc:
        for path in written:
            path.unlink(missing_ok=True)
        LOGGER.error(
            "reproduction failed",
            extra={"event": "reproduce_failed", "context": {"what": what, "error": str(exc)}},
        )
        if isinstance(exc, SizeCalcError):
            raise
        raise SizeCalcError(f"reproduce {what}: {exc}") from exc
    LOGGER.info(
        "reproduction written",
        extra={"event": "reproduce_completed", "context": {"what": what, "out": str(out_dir)}},
    )
    return meta


def main(argv: list[str] | None = None) -> None:
    """Run one reproduction target and print its meta report."""
    parser = argparse.ArgumentParser(description="Regenerate a published table or figure.")
    parser.add_argument("--what", choices=TARGETS, required=True)
    parser.add_argument("--out", type=Path, default=ROOT / "eval" / "results")
    parser.add_argument("--budget", choices=tuple(BUDGETS), default="quick")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--gate",
        action="store_true",
        help="Exit with code 1 when an anchor check fails.",
    )
    args = parser.parse_args(argv)

    meta = reproduce(args.what, args.out, args.budget, args.seed, args.workers)
    print(json.dumps(meta, indent=2, default=str))
    if args.gate and not all(check["passed"] for check in meta["anchors"].values()):
        raise SystemExit(1)


if __name__ == "__main__":
    main()
