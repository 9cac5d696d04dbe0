"""Reproduction runner tests: anchors, outputs and cleanup."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from eval import runner as eval_runner
from sizecalc.exceptions import NoConvergence, ValidationError
from sizecalc.schemas import DgmDerived, SampleSizeSearchResult


def _fake_runner(ctx: eval_runner.RunContext):  # noqa: ANN202
    rows = [{"p": 5, "prap": 0.51}, {"p": 12, "prap": 0.69}]
    return rows, {"prap_p5": 0.51, "prap_p12": 0.69}


def test_check_anchors_absolute_and_relative() -> None:
    anchors = {
        "prap": eval_runner.Anchor(0.5, 0.05, 0.07),
        "n": eval_runner.Anchor(2000, 0.02, 0.02, relative=True),
    }
    results = eval_runner.check_anchors({"prap": 0.56, "n": 2035}, anchors)

    assert results["prap"]["passed"] is False
    assert results["n"]["passed"] is True
    assert results["n"]["tolerance"] == pytest.approx(40.0)


def test_check_anchors_quick_budget_widens_tolerance() -> None:
    anchors = {"prap": eval_runner.Anchor(0.5, 0.05, 0.07)}
    assert eval_runner.check_anchors({"prap": 0.56}, anchors, "quick")["prap"]["passed"] is True


def test_check_anchors_missing_and_comparator() -> None:
    anchors = {
        "gain": eval_runner.Anchor(0.0, 0.0, 0.0, comparator=">="),
        "absent": eval_runner.Anchor(1.0, 0.1, 0.1),
    }
    results = eval_runner.check_anchors({"gain": 0.04}, anchors)

    assert results["gain"]["passed"] is True
    assert results["absent"] == {
        "expected": 1.0,
        "actual": None,
        "tolerance": 0.1,
        "comparator": "within",
        "passed": False,
    }


def test_every_target_has_a_runner_and_anchors() -> None:
    assert set(eval_runner.RUNNERS) == set(eval_runner.TARGETS)
    assert set(eval_runner.ANCHORS) == set(eval_runner.TARGETS)


def test_reproduce_writes_csv_and_meta(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setitem(eval_runner.RUNNERS, "fig1", _fake_runner)

    meta = eval_runner.reproduce("fig1", tmp_path / "out", budget="quick", seed=5)

    with open(tmp_path / "out" / "fig1.csv", newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert [row["p"] for row in rows] == ["5", "12"]
    stored = json.loads((tmp_path / "out" / "meta.json").read_text(encoding="utf-8"))
    assert stored["seed"] == 5
    assert stored["budget_values"]["n_sim"] == 500
    assert stored["anchors"]["prap_p5"]["passed"] is True
    assert stored["tolerances"]["prap_p12"]["applied"] == "quick"
    assert meta["anchors"] == stored["anchors"]
    assert stored["notes"] == []


def test_reproduce_case_records_prevalence_note(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    monkeypatch.setitem(
        eval_runner.RUNNERS, "case", lambda ctx: ([{"quantity": "n_new_analytic", "n": 2788}], {})
    )
    meta = eval_runner.reproduce("case", tmp_path)
    assert meta["notes"] == [eval_runner.CASE_NOTE]


def test_reproduce_failure_leaves_no_outputs(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    def _fails(ctx: eval_runner.RunContext):  # noqa: ANN202
        raise NoConvergence("bracket lost", (0.5, 0.9999))

    monkeypatch.setitem(eval_runner.RUNNERS, "fig3", _fails)
    with pytest.raises(NoConvergence):
        eval_runner.reproduce("fig3", tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_reproduce_removes_csv_when_meta_write_fails(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
) -> None:
    monkeypatch.setitem(eval_runner.RUNNERS, "fig1", _fake_runner)
    original = Path.write_text

    def _disk_full(self: Path, *args, **kwargs):  # noqa: ANN002, ANN003, ANN202
        if self.name == "meta.json":
            raise OSError("disk full")
        return original(self, *args, **kwargs)

    monkeypatch.setattr(Path, "write_text", _disk_full)
    with pytest.raises(eval_runner.SizeCalcError, match="disk full"):
        eval_runner.reproduce("fig1", tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_reproduce_rejects_unknown_target_and_budget(tmp_path: Path) -> None:
    with pytest.raises(ValidationError):
        eval_runner.reproduce("fig9", tmp_path)
    with pytest.raises(ValidationError):
        eval_runner.reproduce("fig1", tmp_path, budget="huge")


def test_run_table2_rows_with_stubbed_simulation(  # noqa: ANN001
    monkeypatch: pytest.MonkeyPatch, make_distribution
) -> None:
    def fake_derive(spec, mc_size, seed):  # noqa: ANN001, ANN202
        r2 = 0.0466 if spec.c_stat <= 0.7 else 0.1
        return DgmDerived(
            r2_cs=r2,
            c_adj=spec.c_stat - 0.02,
            c_adj_single=spec.c_stat - 0.01,
            r2_cs_adjusted=r2 * 0.8,
            mc_size=mc_size,
            seed=seed,
        )

    monkeypatch.setattr(eval_runner, "derive", fake_derive)
    monkeypatch.setattr(
        eval_runner,
        "simulate_performance",
        lambda spec, n, config: make_distribution(np.array([0.88, 0.9, 0.92]), n=n),
    )

    rows, observed = eval_runner.run_table2(eval_runner.RunContext("quick", seed=3, workers=1))

    assert [row["c"] for row in rows] == list(eval_runner.TABLE2_C_VALUES)
    assert observed["n_original_c0.7"] == 1881
    assert all(row["n_adjusted"] > row["n_original"] for row in rows)
    assert observed["es_adjusted_c0.9"] == pytest.approx(0.9)


def test_run_table3_sizes_from_simulated_search(  # noqa: ANN001
    monkeypatch: pytest.MonkeyPatch, make_distribution
) -> None:
    searched: list[tuple[int, float]] = []

    def fake_search(spec, interval, target, config, derived):  # noqa: ANN001, ANN202
        searched.append((spec.n_predictors, spec.prevalence))
        return SampleSizeSearchResult(
            n=2000,
            target=target,
            target_kind="prap",
            achieved=0.8,
            mcse=0.01,
            analytic_seed_n=2500,
        )

    def no_analytic(*args, **kwargs):  # noqa: ANN002, ANN003, ANN202
        raise AssertionError("table3 sizes come from the simulated search")

    monkeypatch.setattr(eval_runner, "derive", lambda spec, mc_size, seed: None)
    monkeypatch.setattr(eval_runner, "find_n_prap", fake_search)
    monkeypatch.setattr(eval_runner, "analytic_n_for_prap", no_analytic)
    monkeypatch.setattr(
        eval_runner,
        "simulate_performance",
        lambda spec, n, config: make_distribution(np.array([0.85, 0.9, 0.95]), n=n),
    )

    rows, observed = eval_runner.run_table3(eval_runner.RunContext("quick", seed=3, workers=1))

    assert len(searched) == len(eval_runner.TABLE3_PREDICTORS) * len(
        eval_runner.TABLE3_PREVALENCES
    )
    assert {row["n"] for row in rows} == {1000, 1500, 2000}
    assert all(row["search_converged"] for row in rows)
    assert set(observed) == {f"sd_ratio_p{p}_prev0.1" for p in eval_runner.TABLE3_PREDICTORS}


def test_run_context_config_uses_budget() -> None:
    config = eval_runner.RunContext("paper", seed=11, workers=2).config(n_sim=300)

    assert config.n_sim == 300
    assert config.n_val == 50_000
    assert config.lsf_bootstraps == 200
    assert config.workers == 2
