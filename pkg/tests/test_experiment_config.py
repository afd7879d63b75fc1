import json

import pytest

from experiment_config import (
    EXPERIMENT_KINDS,
    ConfigError,
    RuntimeSettings,
    complete_config,
    config_hash,
    default_config,
    evaluate_assertions,
    load_config,
)


@pytest.mark.parametrize("kind", EXPERIMENT_KINDS)
def test_defaults_are_valid(kind):
    config = complete_config({"experiment": kind})
    assert config["experiment"] == kind
    assert config["grid"]["n_steps"] % 2 ** config["grid"]["levels"] == 0


def test_overrides_merge_into_defaults():
    config = complete_config({"experiment": "solve", "grid": {"n_steps": 256, "levels": 4}})
    assert config["grid"]["T"] == 1.0
    assert config["grid"]["n_steps"] == 256
    assert config["params"]["scheme"] == "exp_euler"


def test_unknown_kind_and_block():
    with pytest.raises(ConfigError, match="experiment"):
        default_config("fourier")
    with pytest.raises(ConfigError, match="telemetry: unknown block"):
        complete_config({"experiment": "solve", "telemetry": {}})
    with pytest.raises(ConfigError):
        complete_config({"grid": {}})


def test_problems_carry_dotted_paths():
    with pytest.raises(ConfigError) as info:
        complete_config(
            {
                "experiment": "average",
                "mc": {"replicas": 0, "seed": -1, "p": []},
                "params": {"alpha": 0.9, "epsilons": [0.1, 0.2]},
            }
        )
    problems = " ".join(info.value.problems)
    for path in ("mc.replicas", "mc.seed", "mc.p", "params.alpha", "params.epsilons"):
        assert path in problems


def test_levels_must_divide_grid():
    with pytest.raises(ConfigError, match="too coarse"):
        complete_config({"experiment": "sewing", "grid": {"n_steps": 100}})


def test_fast_sampling_choice():
    assert complete_config({"experiment": "average", "params": {"fast_sampling": "left"}})["params"]["fast_sampling"] == "left"
    with pytest.raises(ConfigError, match="params.fast_sampling"):
        complete_config({"experiment": "average", "params": {"fast_sampling": "midpoint"}})


def test_hurst_delta_and_time_ranges():
    with pytest.raises(ConfigError, match="params.H"):
        complete_config({"experiment": "young", "params": {"H": 1.2}})
    with pytest.raises(ConfigError, match="params.delta"):
        complete_config({"experiment": "ergodic", "params": {"delta": 1.0}})
    with pytest.raises(ConfigError, match="params.t"):
        complete_config({"experiment": "counterexample", "params": {"t": 0}})
    with pytest.raises(ConfigError, match="params.hursts"):
        complete_config({"experiment": "fbm-cov", "params": {"hursts": [0.5, 1.5]}})


def test_assert_block_structure():
    with pytest.raises(ConfigError, match="unknown operator"):
        complete_config({"experiment": "solve", "assert": {"max_norm": {"below": 1.0}}})
    with pytest.raises(ConfigError, match="expected a number"):
        complete_config({"experiment": "solve", "assert": {"max_norm": {"le": "small"}}})
    with pytest.raises(ConfigError, match="expected an object"):
        complete_config({"experiment": "solve", "assert": {"max_norm": 3}})


def test_load_config(tmp_path):
    path = tmp_path / "solve.json"
    path.write_text(json.dumps({"experiment": "solve", "mc": {"seed": 5}}))
    assert load_config(str(path))["mc"]["seed"] == 5
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(broken))
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.json"))


def test_hash_ignores_output_and_key_order():
    a = complete_config({"experiment": "holder", "output": {"dir": "a"}})
    b = complete_config({"output": {"dir": "b"}, "experiment": "holder"})
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    c = complete_config({"experiment": "holder", "mc": {"seed": 1}})
    assert config_hash(c) != config_hash(a)


def test_runtime_settings_from_environment(monkeypatch):
    monkeypatch.setenv("FRACLAB_THREADS", "4")
    monkeypatch.setenv("FRACLAB_DETERMINISTIC", "0")
    assert RuntimeSettings().to_dict() == {"threads": 4, "deterministic": False}
    assert RuntimeSettings(threads=2).threads == 2
    monkeypatch.setenv("FRACLAB_DETERMINISTIC", "true")
    assert RuntimeSettings().to_dict() == {"threads": 1, "deterministic": True}
    monkeypatch.setenv("FRACLAB_THREADS", "many")
    with pytest.raises(ConfigError, match="FRACLAB_THREADS"):
        RuntimeSettings()
    with pytest.raises(ConfigError):
        RuntimeSettings(threads=0)


def test_evaluate_assertions():
    config = {"assert": {"slope": {"ge": 0.4, "le": 0.6}, "missing": {"lt": 1.0}}}
    results = evaluate_assertions(config, {"slope": 0.5})
    assert [r["passed"] for r in results] == [True, True, False]
    failed = evaluate_assertions({"assert": {"slope": {"gt": 0.7}}}, {"slope": 0.5})
    assert failed == [{"metric": "slope", "op": "gt", "bound": 0.7, "value": 0.5, "passed": False}]
