"""End-to-end runs of the shipped configurations."""

from pathlib import Path

import pytest

from experiment_config import load_config
from experiments import run_experiment

CONFIGS = Path(__file__).parent.parent / "configs"


def _run(name, tmp_path, seed=None):
    result = run_experiment(load_config(str(CONFIGS / f"{name}.json")), str(tmp_path), seed=seed)
    assert result["success"], result.get("error")
    return result


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 2, 4, 5, 7])
def test_mixed_integral_matches_young_across_seeds(tmp_path, seed):
    summary = _run("mixed", tmp_path, seed)["summary"]
    assert summary["max_relative_error"] < 1e-2


@pytest.mark.slow
def test_mild_young_germ_error_exponent(tmp_path):
    result = _run("mild-young", tmp_path)
    assert result["summary"]["slope"] >= 1.3
    assert result["summary"]["r_squared"] >= 0.9
    assert result["passed"]


@pytest.mark.slow
def test_ergodic_deviation_rate(tmp_path):
    result = _run("ergodic", tmp_path)
    assert 0.3 <= result["summary"]["slope"] <= 0.6
    assert result["summary"]["r_squared"] >= 0.9
    assert result["passed"]


@pytest.mark.slow
def test_averaging_distances_shrink(tmp_path):
    result = _run("average", tmp_path)
    summary = result["summary"]
    assert summary["sup_strictly_decreasing"]
    assert summary["sup_shrinkage"] <= 0.8
    assert summary["moral_holds"]
    assert result["passed"]
