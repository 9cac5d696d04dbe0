"""Sample-size CLI for the calibration slope of binary-outcome risk models."""

from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator

import click
import pydantic
from dotenv import dotenv_values

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from sizecalc import __version__  # noqa: E402
from sizecalc.analytic import analytic_n_for_expected, analytic_n_for_prap  # noqa: E402
from sizecalc.config import Settings, get_settings  # noqa: E402
from sizecalc.dgm import derive  # noqa: E402
from sizecalc.exceptions import ExcessiveFailures, SizeCalcError  # noqa: E402
from sizecalc.exceptions import ValidationError as InputError  # noqa: E402
from sizecalc.logging import bind_run, configure_logging, note_seed  # noqa: E402
from sizecalc.metrics import write_metrics  # noqa: E402
from sizecalc.montecarlo import (  # noqa: E402
    find_n_expected,
    find_n_prap,
    simulate_performance,
    summarize_all,
)
from sizecalc.schemas import ScenarioFile, SimulationConfig, TrueModelSpec  # noqa: E402


class ComputationError(click.ClickException):
    exit_code = 3


class QualityError(click.ClickException):
    exit_code = 4


@dataclass
class Invocation:
    """Resolved inputs of one command: scenario values, seed and output options."""

    scenario: ScenarioFile
    seed: int
    as_json: bool
    adjust: bool | None = None

    def spec(self) -> TrueModelSpec:
        return self.scenario.spec()

    def simulation(self) -> SimulationConfig:
        return self.scenario.simulation(self.seed)


def _get_settings() -> Settings:
    return get_settings()


def _read_scenario(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    values = dotenv_values(path)
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None and value != ""
    }


def _format_validation(exc: pydantic.ValidationError) -> str:
    messages = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error.get("loc", ()))
        message = str(error.get("msg", "")).removeprefix("Value error, ")
        messages.append(f"{location}: {message}" if location else message)
    return "; ".join(messages)


@contextmanager
def _domain_errors() -> Iterator[None]:
    """Map domain and validation errors onto exit codes 2, 3 and 4."""
    try:
        yield
    except pydantic.ValidationError as exc:
        raise click.UsageError(_format_validation(exc)) from exc
    except InputError as exc:
        raise click.UsageError(str(exc.detail)) from exc
    except ExcessiveFailures as exc:
        raise QualityError(str(exc.detail)) from exc
    except SizeCalcError as exc:
        raise ComputationError(f"{type(exc).__name__}: {exc.detail}") from exc
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


def _settings_defaults(settings: Settings) -> dict[str, Any]:
    values = {
        "n_sim": settings.n_sim,
        "n_val": settings.n_val,
        "mc_size": settings.mc_size,
        "lsf_bootstraps": settings.lsf_bootstraps,
        "workers": settings.workers,
    }
    return {key: value for key, value in values.items() if value is not None}


def _invocation(options: dict[str, Any], settings: Settings) -> Invocation:
    merged = _settings_defaults(settings)
    merged.update(_read_scenario(options.pop("scenario", None)))
    as_json = bool(options.pop("as_json", False))
    adjust = options.pop("adjust", None)
    merged.update({key: value for key, value in options.items() if value is not None})
    scenario = ScenarioFile(**merged)
    seed = scenario.seed if scenario.seed is not None else settings.seed
    return Invocation(scenario=scenario, seed=seed, as_json=as_json, adjust=adjust)


def _echo_report(report: dict[str, Any], as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True, default=str))
        return
    for section, payload in report["result"].items():
        if isinstance(payload, dict):
            fields = " ".join(
                f"{key}={_short(value)}"
                for key, value in payload.items()
                if not isinstance(value, (dict, list))
            )
            click.echo(f"{section}: {fields}")
        else:
            click.echo(f"{section}={_short(payload)}")
    click.echo(f"seed={report['seed']} version={report['version']}")


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _execute(
    options: dict[str, Any],
    body: Callable[[Invocation], tuple[dict[str, Any], dict[str, Any]]],
) -> None:
    settings = _get_settings()
    configure_logging(settings.log_level)
    metrics_file = options.pop("metrics_file", None) or settings.metrics_path
    try:
        with bind_run(), _domain_errors():
            invocation = _invocation(options, settings)
            note_seed(invocation.seed)
            result, diagnostics = body(invocation)
        report = {
            "inputs": invocation.scenario.model_dump(),
            "result": result,
            "diagnostics": diagnostics,
            "seed": invocation.seed,
            "version": __version__,
        }
        _echo_report(report, invocation.as_json)
    finally:
        if metrics_file:
            write_metrics(str(metrics_file))


def _common_options(func: Callable[..., None]) -> Callable[..., None]:
    """Scenario, seed, output and budget flags shared by the calculation commands."""
    decorators = [
        click.option("--scenario", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="key=value scenario file; flags override its values."),
        click.option("--prev", type=float, default=None, help="Outcome prevalence in (0,1)."),
        click.option("--cstat", type=float, default=None, help="True C-statistic in (0.5,1)."),
        click.option("--predictors", type=int, default=None, help="Number of predictors."),
        click.option("--seed", type=int, default=None,
                     help="Master seed (falls back to SIZECALC_SEED)."),
        click.option("--workers", type=int, default=None, help="Worker processes [1]."),
        click.option("--n-sim", type=int, default=None,
                     help="Simulation replicates [3000 if p<=6 else 2000]."),
        click.option("--n-val", type=int, default=None, help="Validation rows [50000]."),
        click.option("--mc-size", type=int, default=None,
                     help="Rows for R2_CS and adjusted C [1000000]."),
        click.option("--lsf-bootstraps", type=int, default=None, help="Bootstraps for LSF [200]."),
        click.option("--fit", type=click.Choice(["mle", "mle-lsf"]), default=None,
                     help="Fit method in simulations [mle]."),
        click.option("--fast-coefficients/--no-fast-coefficients", default=None,
                     help="Draw coefficients from the asymptotic normal [off]."),
        click.option("--json", "as_json", is_flag=True, default=False, help="Emit a JSON report."),
        click.option("--metrics-file", type=click.Path(dir_okay=False), default=None,
                     help="Write Prometheus metrics here on exit."),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def _method_options(func: Callable[..., None]) -> Callable[..., None]:
    func = click.option("--adjust/--no-adjust", default=None,
                        help="Force adjusted C inputs on or off [auto at C>=0.8].")(func)
    return click.option("--method", type=click.Choice(["analytic", "simulation", "both"]),
                        default=None, help="Calculation track [analytic].")(func)


@click.group()
@click.version_option(__version__, prog_name="sizecalc")
def app() -> None:
    """Sample sizes that target the calibration slope of a logistic risk model."""


@app.command("expected")
@_common_options
@_method_options
@click.option("--target-slope", type=float, default=None, help="Target E(slope) [0.9].")
@click.option("--lower", type=float, default=None, help="Acceptable slope lower bound [0.85].")
@click.option("--upper", type=float, default=None, help="Acceptable slope upper bound [1.15].")
def expected(**options: Any) -> None:
    """Sample size for a target expected calibration slope."""

    def body(run: Invocation) -> tuple[dict[str, Any], dict[str, Any]]:
        spec, sim, scenario = run.spec(), run.simulation(), run.scenario
        derived = derive(spec, sim.mc_size, sim.seed)
        result: dict[str, Any] = {}
        if scenario.method in ("analytic", "both"):
            result["analytic"] = analytic_n_for_expected(
                spec, scenario.target_slope, derived, run.adjust, scenario.interval()
            ).model_dump()
        if scenario.method in ("simulation", "both"):
            result["simulation"] = find_n_expected(
                spec, scenario.target_slope, sim, derived
            ).model_dump()
        return result, {"dgm": derived.model_dump()}

    _execute(options, body)


@app.command("prap")
@_common_options
@_method_options
@click.option("--target-prap", type=float, default=None, help="Target PrAP [0.8].")
@click.option("--lower", type=float, default=None, help="Acceptable slope lower bound [0.85].")
@click.option("--upper", type=float, default=None, help="Acceptable slope upper bound [1.15].")
def prap(**options: Any) -> None:
    """Sample size for a target probability of acceptable calibration slope."""

    def body(run: Invocation) -> tuple[dict[str, Any], dict[str, Any]]:
        spec, sim, scenario = run.spec(), run.simulation(), run.scenario
        interval = scenario.interval()
        derived = derive(spec, sim.mc_size, sim.seed)
        result: dict[str, Any] = {}
        if scenario.method in ("analytic", "both"):
            result["analytic"] = analytic_n_for_prap(
                spec, interval, scenario.target_prap, derived, run.adjust
            ).model_dump()
        if scenario.method in ("simulation", "both"):
            result["simulation"] = find_n_prap(
                spec, interval, scenario.target_prap, sim, derived
            ).model_dump()
        return result, {"dgm": derived.model_dump()}

    _execute(options, body)


@app.command("performance")
@_common_options
@click.option("--n", "n_dev", type=int, required=True, help="Development sample size.")
@click.option("--lower", type=float, default=None, help="Acceptable slope lower bound [0.85].")
@click.option("--upper", type=float, default=None, help="Acceptable slope upper bound [1.15].")
@click.option("--dump-replicates", type=click.Path(dir_okay=False), default=None,
              help="Write one CSV row per replicate.")
def performance(**options: Any) -> None:
    """Simulated performance distribution at a given development size."""
    n_dev = options.pop("n_dev")
    dump = options.pop("dump_replicates")

    def body(run: Invocation) -> tuple[dict[str, Any], dict[str, Any]]:
        dist = simulate_performance(run.spec(), n_dev, run.simulation())
        if dump:
            dist.to_csv(dump)
        summaries = summarize_all(dist, run.scenario.interval())
        result: dict[str, Any] = {name: summary.model_dump() for name, summary in summaries.items()}
        if dist.lsf is not None:
            result["mean_lsf"] = float(dist.lsf.mean())
        diagnostics = {
            "n": n_dev,
            "n_replicates": dist.n_total,
            "n_failed": dist.n_failed,
            "failures": dist.failures,
            "fit_method": dist.fit_method.value,
        }
        return result, diagnostics

    _execute(options, body)


@app.command("adjust-c")
@_common_options
def adjust_c(**options: Any) -> None:
    """Adjusted C-statistics (p predictors and single predictor) and R2_CS at both."""

    def body(run: Invocation) -> tuple[dict[str, Any], dict[str, Any]]:
        spec, sim = run.spec(), run.simulation()
        derived = derive(spec, sim.mc_size, sim.seed)
        result = {
            "c": spec.c_stat,
            "c_adj": derived.c_adj,
            "c_adj_single": derived.c_adj_single,
            "r2_cs": derived.r2_cs,
            "r2_cs_adjusted": derived.r2_cs_adjusted,
        }
        return result, {"mc_size": derived.mc_size}

    _execute(options, body)


@app.command("reproduce")
@click.option("--what", type=click.Choice(
    ["table2", "table3", "fig1", "fig2", "fig3", "fig4", "case"]), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--budget", type=click.Choice(["quick", "paper"]), default="quick", show_default=True)
@click.option("--seed", type=int, default=None, help="Master seed (falls back to SIZECALC_SEED).")
@click.option(
    "--workers", type=int, default=None, help="Worker processes (falls back to SIZECALC_WORKERS)."
)
@click.option("--metrics-file", type=click.Path(dir_okay=False), default=None)
def reproduce(
    what: str,
    out_dir: str,
    budget: str,
    seed: int | None,
    workers: int | None,
    metrics_file: str | None,
) -> None:
    """Regenerate a published table or figure series as CSV plus meta.json."""
    from eval.runner import reproduce as run_reproduction

    settings = _get_settings()
    configure_logging(settings.log_level)
    master = seed if seed is not None else settings.seed
    pool = workers if workers is not None else settings.workers
    try:
        with bind_run(), _domain_errors():
            note_seed(master)
            meta = run_reproduction(
                what, Path(out_dir), budget=budget, seed=master, workers=pool
            )
        failed = [name for name, check in meta.get("anchors", {}).items() if not check["passed"]]
        click.echo(
            f"reproduce={what} budget={budget} out={out_dir} "
            f"anchors_failed={','.join(failed) if failed else 'none'}"
        )
    finally:
        target = metrics_file or settings.metrics_path
        if target:
            write_metrics(str(target))


if __name__ == "__main__":
    app()
