import json

import numpy as np
import pandas as pd
import pytest

from experiments import ratefit, run_experiment
from experiment_config import RuntimeSettings, complete_config
from main import EXIT_ASSERTION, EXIT_ERROR, EXIT_OK, main
from utils import read_csv, read_csv_header, write_csv

SMALL_SOLVE = {
    "experiment": "solve",
    "generator": {"n_modes": 8},
    "q": {"m_modes": 4},
    "grid": {"n_steps": 64, "levels": 4},
    "params": {"scheme": "picard", "picard_iterations": 3},
}

SMALL_AVERAGE = {
    "experiment": "average",
    "generator": {"n_modes": 4},
    "q": {"m_modes": 2},
    "mc": {"replicas": 3},
    "params": {"epsilons": [0.2, 0.1], "slow_steps": 32},
}


def _write(tmp_path, name, config):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


def test_solve_writes_stamped_artifacts(tmp_path):
    config = _write(tmp_path, "solve.json", SMALL_SOLVE)
    out = tmp_path / "out"
    assert main(["solve", "--config", config, "--out", str(out)]) == EXIT_OK
    csv = out / "solve" / "path.csv"
    header = read_csv_header(str(csv))
    assert header["experiment"] == "solve"
    assert header["master_seed"] == "0"
    assert header["pair_strategy"] == "all"
    assert len(header["config_hash"]) == 64
    frame = read_csv(str(csv))
    assert list(frame.columns[:2]) == ["t", "x0"]
    assert len(frame) == 65
    summary = json.loads((out / "solve" / "summary.json").read_text())
    assert summary["summary"]["scheme"] == "picard"
    assert len(summary["summary"]["picard_distances"]) == 3
    assert summary["passed"]


def test_rerun_is_byte_identical(tmp_path):
    config = _write(tmp_path, "solve.json", SMALL_SOLVE)
    out = tmp_path / "out"
    main(["run", "--config", config, "--out", str(out)])
    first = (out / "solve" / "path.csv").read_bytes()
    main(["run", "--config", config, "--out", str(out)])
    assert (out / "solve" / "path.csv").read_bytes() == first


def test_seed_override_changes_output(tmp_path):
    config = _write(tmp_path, "solve.json", SMALL_SOLVE)
    main(["solve", "--config", config, "--out", str(tmp_path / "a")])
    main(["solve", "--config", config, "--out", str(tmp_path / "b"), "--seed", "5"])
    a = tmp_path / "a" / "solve" / "path.csv"
    b = tmp_path / "b" / "solve" / "path.csv"
    assert read_csv_header(str(b))["master_seed"] == "5"
    assert read_csv_header(str(a))["config_hash"] != read_csv_header(str(b))["config_hash"]
    assert not np.allclose(read_csv(str(a))["x0"], read_csv(str(b))["x0"])


def test_thread_count_does_not_change_results(tmp_path):
    config = complete_config(SMALL_AVERAGE)
    one = run_experiment(config, str(tmp_path / "one"), RuntimeSettings(threads=1))
    two = run_experiment(config, str(tmp_path / "two"), RuntimeSettings(threads=2))
    assert one["success"] and two["success"]
    for name in ("distances.csv", "summary.csv"):
        left = (tmp_path / "one" / "average" / name).read_bytes()
        right = (tmp_path / "two" / "average" / name).read_bytes()
        assert left == right


def test_failed_assertion_exits_with_two(tmp_path):
    config = _write(tmp_path, "ce.json", {
        "experiment": "counterexample",
        "mc": {"replicas": 200},
        "params": {"epsilons": [0.1]},
        "assert": {"estimate": {"lt": 0.0}},
    })
    assert main(["counterexample", "--config", config, "--out", str(tmp_path)]) == EXIT_ASSERTION
    summary = json.loads((tmp_path / "counterexample" / "summary.json").read_text())
    assert summary["passed"] is False
    assert summary["assertions"][0]["metric"] == "estimate"


def test_invalid_config_exits_with_one(tmp_path):
    config = _write(tmp_path, "bad.json", {"experiment": "solve", "grid": {"n_steps": 100}})
    assert main(["run", "--config", config, "--out", str(tmp_path)]) == EXIT_ERROR
    assert not (tmp_path / "solve").exists()
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR


def test_family_mismatch_exits_with_one(tmp_path):
    config = _write(tmp_path, "solve.json", SMALL_SOLVE)
    assert main(["fbm", "--config", config, "--out", str(tmp_path)]) == EXIT_ERROR


def test_unknown_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit):
        main(["transmogrify"])


def test_ratefit_recovers_power(tmp_path):
    path = str(tmp_path / "power.csv")
    x = np.array([0.1, 0.2, 0.4, 0.8])
    write_csv(path, pd.DataFrame({"epsilon": x, "value": 3.0 * x ** 2}), {"experiment": "synthetic"})
    fit = ratefit(path, "epsilon", "value")
    assert fit["success"]
    assert fit["slope"] == pytest.approx(2.0)
    assert fit["points"] == 4
    assert main(["ratefit", path, "epsilon", "value"]) == EXIT_OK
    assert main(["ratefit", path, "epsilon", "median"]) == EXIT_ERROR


def test_solve_writes_norm_report(tmp_path):
    result = run_experiment(complete_config(SMALL_SOLVE), str(tmp_path))
    assert result["success"]
    norms = read_csv(str(tmp_path / "solve" / "norms.csv"))
    assert list(norms.columns) == ["norm_kind", "gamma_or_delta", "p", "value", "n_grid", "n_replicas"]
    assert norms["norm_kind"].tolist() == ["mild_holder"]
    assert norms["value"][0] == pytest.approx(result["summary"]["mild_holder_norm"])
    assert norms["n_grid"][0] == 64 and norms["n_replicas"][0] == 1


def test_sewing_writes_telemetry(tmp_path):
    config = complete_config({
        "experiment": "sewing",
        "generator": {"n_modes": 4},
        "q": {"m_modes": 2},
        "grid": {"n_steps": 64, "levels": 5},
        "mc": {"replicas": 6, "p": [2.0, 4.0]},
        "params": {"report_levels": [2, 5]},
    })
    assert run_experiment(config, str(tmp_path))["success"]
    telemetry = read_csv(str(tmp_path / "sewing" / "telemetry.csv"))
    assert list(telemetry.columns) == ["level", "intervals", "diff_norm", "value_norm"]
    assert telemetry["level"].tolist() == list(range(6))
    assert np.isnan(telemetry["diff_norm"][0])
    assert np.all(telemetry["value_norm"] > 0)
    assert read_csv_header(str(tmp_path / "sewing" / "telemetry.csv"))["p"] == "2.0"
    diffs = read_csv(str(tmp_path / "sewing" / "level_diffs.csv"))
    first = diffs[diffs["p"] == 2.0]["diff"].to_numpy()
    assert np.allclose(telemetry["diff_norm"][1:].to_numpy(), first)


def test_average_reports_sup_distances_and_norms(tmp_path):
    result = run_experiment(complete_config(SMALL_AVERAGE), str(tmp_path))
    assert result["success"]
    summary = result["summary"]
    assert len(summary["sup_medians"]) == 2
    assert isinstance(summary["sup_strictly_decreasing"], bool)
    assert summary["sup_shrinkage"] == pytest.approx(summary["sup_medians"][1] / summary["sup_medians"][0])
    distances = read_csv(str(tmp_path / "average" / "distances.csv"))
    assert {"distance", "sup_distance"} <= set(distances.columns)
    norms = read_csv(str(tmp_path / "average" / "norms.csv"))
    assert norms["epsilon"].tolist() == [0.2, 0.1]
    assert set(norms["norm_kind"]) == {"b_alpha_p"}
    assert norms["value"].tolist() == pytest.approx(summary["lp_norms"])
    assert norms["n_replicas"].tolist() == [3, 3]


def test_failed_run_leaves_no_stale_artifacts(tmp_path, monkeypatch):
    import experiments

    config = complete_config(SMALL_SOLVE)
    assert run_experiment(config, str(tmp_path))["success"]
    stale = tmp_path / "solve" / "norms.csv"
    assert stale.exists()

    def broken(config, settings):
        raise RuntimeError("solver exploded")

    monkeypatch.setitem(experiments.RUNNERS, "solve", broken)
    result = run_experiment(config, str(tmp_path))
    assert not result["success"]
    assert "exploded" in result["error"]
    assert not stale.exists()
    assert not (tmp_path / "solve" / "path.csv").exists()
    assert not (tmp_path / "solve" / "summary.json").exists()
