"""Prometheus metrics registry for simulation observability."""

from __future__ import annotations

from prometheus_client import REGISTRY, Counter, Histogram, generate_latest, write_to_textfile

REPLICATES_TOTAL = Counter(
    "sizecalc_replicates_total",
    "Monte Carlo training replicates by outcome",
    ["status", "fit_method"],
)
REPLICATE_DURATION_SECONDS = Histogram(
    "sizecalc_simulation_duration_seconds",
    "Wall time of one simulate_performance call",
    ["fit_method"],
)
BOOTSTRAP_FITS_TOTAL = Counter(
    "sizecalc_bootstrap_fits_total",
    "Bootstrap refits for the linear shrinkage factor by outcome",
    ["status"],
)
SEARCH_PROBES_TOTAL = Counter(
    "sizecalc_search_probes_total",
    "Sample sizes probed by the stochastic search",
    ["target"],
)
CALIBRATIONS_TOTAL = Counter(
    "sizecalc_dgm_calibrations_total",
    "Data-generating mechanism calibrations by outcome",
    ["status"],
)


def render_metrics() -> bytes:
    return generate_latest()


def write_metrics(path: str) -> None:
    """Dump the default registry in Prometheus text format."""
    write_to_textfile(path, REGISTRY)
