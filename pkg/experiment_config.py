"""
Experiment Configuration

This module loads, completes, validates and hashes the JSON experiment
configurations, and reads the two runtime settings (thread count and
deterministic mode) from the environment.
"""

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional

# Load environment variables from .env file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass  # dotenv not available, use environment variables only

logger = logging.getLogger(__name__)

BLOCKS = ("experiment", "generator", "q", "coefficients", "fast", "grid", "mc", "output", "params", "assert")

ASSERT_OPERATORS = {
    "le": lambda value, bound: value <= bound,
    "lt": lambda value, bound: value < bound,
    "ge": lambda value, bound: value >= bound,
    "gt": lambda value, bound: value > bound,
    "eq": lambda value, bound: value == bound,
}

SUBCOMMAND_KINDS = {
    "fbm": ("fbm-cov", "holder"),
    "young": ("young", "mild-young", "mixed"),
    "sewing": ("sewing",),
    "solve": ("solve", "apriori"),
    "ergodic": ("ergodic",),
    "average": ("average",),
    "counterexample": ("counterexample",),
}

EXPERIMENT_KINDS = tuple(kind for kinds in SUBCOMMAND_KINDS.values() for kind in kinds)

_COMMON = {
    "generator": {"kind": "laplacian_shifted", "n_modes": 16},
    "q": {"m_modes": 8, "q_exponent": 1.5},
    "coefficients": {"modulation": "cos", "a_decay": 0.5, "bump_radius": 1.0, "alpha": 0.5},
    "fast": {"kind": "ou", "fine_step": 0.01},
    "grid": {"T": 1.0, "n_steps": 512, "levels": 9},
    "mc": {"replicas": 200, "p": [2.0], "seed": 0},
    "output": {"dir": "results"},
    "params": {},
    "assert": {},
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fbm-cov": {
        "grid": {"n_steps": 512},
        "mc": {"replicas": 20000},
        "params": {"hursts": [0.6, 0.75, 0.9], "subgrid": 16},
    },
    "holder": {
        "grid": {"n_steps": 1024},
        "mc": {"replicas": 500},
        "params": {"H": 0.75, "lags": [1, 2, 4, 8, 16, 32, 64]},
    },
    "young": {
        "grid": {"n_steps": 4096, "levels": 12},
        "params": {"H": 0.75},
    },
    "mild-young": {
        "grid": {"n_steps": 4096, "levels": 6},
        "mc": {"replicas": 20},
        "params": {"H": 0.75, "H_integrand": 0.74, "interval_steps": [64, 128, 256, 512, 1024, 2048]},
    },
    "mixed": {
        "generator": {"n_modes": 8},
        "q": {"m_modes": 4},
        "grid": {"n_steps": 256, "levels": 8},
        "mc": {"replicas": 20},
        "params": {"H": 0.75},
    },
    "sewing": {
        "generator": {"n_modes": 8},
        "q": {"m_modes": 4},
        "grid": {"n_steps": 1024, "levels": 10},
        "mc": {"replicas": 200},
        "params": {"H": 0.75, "report_levels": [4, 10]},
    },
    "solve": {
        "grid": {"n_steps": 512, "levels": 9},
        "params": {"H": 0.75, "alpha": 0.55, "x0_amplitude": 0.5, "scheme": "exp_euler", "richardson": True},
    },
    "apriori": {
        "grid": {"n_steps": 256, "levels": 8},
        "params": {"H": 0.75, "scales": [1.0, 2.0, 4.0, 8.0], "gamma_bar": 0.55, "gamma": 0.7, "x0_amplitude": 0.5},
    },
    "ergodic": {
        "fast": {"fine_step": 0.01},
        "grid": {"n_steps": 8, "levels": 3},
        "mc": {"replicas": 500, "p": [2.0]},
        "params": {"delta": 0.3, "epsilons": [0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125]},
    },
    "average": {
        "mc": {"replicas": 200},
        "params": {"H": 0.75, "alpha": 0.55, "epsilons": [0.2, 0.1, 0.05, 0.025], "x0_amplitude": 0.5},
    },
    "counterexample": {
        "mc": {"replicas": 50000},
        "params": {"epsilons": [0.1], "t": 1.0, "fast_step": 0.1},
    },
}


class ConfigError(ValueError):
    """Schema violations, each prefixed with its dotted field path."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration:\n  " + "\n  ".join(self.problems))


class RuntimeSettings:
    """Runtime settings read from the environment; flags override them."""

    def __init__(self, threads: Optional[int] = None, deterministic: Optional[bool] = None):
        env_threads = os.getenv("FRACLAB_THREADS", "1")
        env_deterministic = os.getenv("FRACLAB_DETERMINISTIC", "0")
        try:
            self.threads = int(threads if threads is not None else env_threads)
        except ValueError:
            raise ConfigError([f"FRACLAB_THREADS: not an integer ({env_threads!r})"])
        if self.threads < 1:
            raise ConfigError([f"threads: must be at least 1, got {self.threads}"])
        if deterministic is None:
            deterministic = env_deterministic.strip().lower() in ("1", "true", "yes")
        self.deterministic = bool(deterministic)
        if self.deterministic and self.threads != 1:
            logger.info("Deterministic mode runs single-threaded")
            self.threads = 1

    def to_dict(self) -> Dict[str, Any]:
        return {"threads": self.threads, "deterministic": self.deterministic}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def default_config(kind: str) -> Dict[str, Any]:
    """Built-in configuration of an experiment kind."""
    if kind not in DEFAULTS:
        raise ConfigError([f"experiment: unknown kind {kind!r}, expected one of {list(EXPERIMENT_KINDS)}"])
    config = _merge(_COMMON, DEFAULTS[kind])
    config["experiment"] = kind
    return config


def complete_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Merge a raw config over the defaults of its kind and validate it."""
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    unknown = sorted(set(raw) - set(BLOCKS))
    if unknown:
        raise ConfigError([f"{key}: unknown block" for key in unknown])
    kind = raw.get("experiment")
    if not isinstance(kind, str):
        raise ConfigError(["experiment: missing or not a string"])
    config = _merge(default_config(kind), raw)
    validate_config(config)
    return config


def load_config(path: str) -> Dict[str, Any]:
    """
    Load an experiment configuration from a JSON file.

    Args:
        path: Path to the JSON file

    Returns:
        The completed and validated configuration
    """
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError:
        logger.error(f"Config file {path} not found")
        raise
    except json.JSONDecodeError as e:
        raise ConfigError([f"<file>: invalid JSON in {path} ({e.msg} at line {e.lineno})"])
    return complete_config(raw)


def _positive(config: Dict[str, Any], block: str, key: str, problems: List[str], integer: bool = False) -> None:
    value = config.get(block, {}).get(key)
    if value is None:
        return
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        label = "a positive integer" if integer else "a positive number"
        problems.append(f"{block}.{key}: expected {label}, got {value!r}")


def validate_config(config: Dict[str, Any]) -> None:
    """
    Check a merged configuration against the schema.

    Raises:
        ConfigError listing every violation with its dotted path
    """
    problems: List[str] = []
    for block in BLOCKS[1:]:
        if not isinstance(config.get(block), dict):
            problems.append(f"{block}: expected an object")
    if problems:
        raise ConfigError(problems)
    if config["experiment"] not in EXPERIMENT_KINDS:
        problems.append(f"experiment: unknown kind {config['experiment']!r}")

    _positive(config, "generator", "n_modes", problems, integer=True)
    _positive(config, "q", "m_modes", problems, integer=True)
    _positive(config, "grid", "T", problems)
    _positive(config, "grid", "n_steps", problems, integer=True)
    _positive(config, "grid", "dt", problems)
    _positive(config, "mc", "replicas", problems, integer=True)
    _positive(config, "fast", "fine_step", problems)

    levels = config["grid"].get("levels")
    if not isinstance(levels, int) or levels < 1:
        problems.append(f"grid.levels: expected a positive integer, got {levels!r}")
    elif isinstance(config["grid"].get("n_steps"), int) and config["grid"]["n_steps"] % 2 ** levels:
        problems.append(
            f"grid.levels: grid of {config['grid']['n_steps']} steps is too coarse for {levels} dyadic levels"
        )

    seed = config["mc"].get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append(f"mc.seed: expected a non-negative integer, got {seed!r}")
    p_values = config["mc"].get("p")
    if not isinstance(p_values, list) or not p_values or any(
        not isinstance(p, (int, float)) or p < 1 for p in p_values
    ):
        problems.append(f"mc.p: expected a non-empty list of numbers >= 1, got {p_values!r}")

    params = config["params"]
    for key in ("H", "H_integrand"):
        if key in params and not 0 < params[key] < 1:
            problems.append(f"params.{key}: Hurst parameter must lie in (0, 1), got {params[key]!r}")
    for hurst in params.get("hursts", []):
        if not 0 < hurst < 1:
            problems.append(f"params.hursts: Hurst parameter must lie in (0, 1), got {hurst!r}")
    if "alpha" in params and "H" in params and not 0 < params["alpha"] < params["H"]:
        problems.append(f"params.alpha: need 0 < alpha < H, got alpha={params['alpha']!r}, H={params['H']!r}")
    if "delta" in params and not 0 < params["delta"] < 1:
        problems.append(f"params.delta: must lie in (0, 1), got {params['delta']!r}")
    epsilons = params.get("epsilons")
    if epsilons is not None:
        if not isinstance(epsilons, list) or any(not isinstance(e, (int, float)) or e <= 0 for e in epsilons):
            problems.append(f"params.epsilons: expected positive numbers, got {epsilons!r}")
        elif config["experiment"] == "average" and any(b >= a for a, b in zip(epsilons, epsilons[1:])):
            problems.append("params.epsilons: must be strictly descending")
    if "fast_sampling" in params and params["fast_sampling"] not in ("cell_mean", "left"):
        problems.append(f"params.fast_sampling: expected \"cell_mean\" or \"left\", got {params['fast_sampling']!r}")
    if "t" in params and not params["t"] > 0:
        problems.append(f"params.t: must be positive, got {params['t']!r}")

    for metric, condition in config["assert"].items():
        if not isinstance(condition, dict) or not condition:
            problems.append(f"assert.{metric}: expected an object such as {{\"le\": 0.02}}")
            continue
        for op, bound in condition.items():
            if op not in ASSERT_OPERATORS:
                problems.append(f"assert.{metric}.{op}: unknown operator, expected one of {sorted(ASSERT_OPERATORS)}")
            elif isinstance(bound, bool) and op != "eq":
                problems.append(f"assert.{metric}.{op}: expected a number, got {bound!r}")
            elif not isinstance(bound, (int, float)):
                problems.append(f"assert.{metric}.{op}: expected a number, got {bound!r}")

    if problems:
        raise ConfigError(problems)


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form; the output directory does not enter it."""
    hashed = {key: value for key, value in config.items() if key != "output"}
    canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def evaluate_assertions(config: Dict[str, Any], summary: Dict[str, Any]) -> List[Dict[str, Any]]:
    """
    Check the assert block against the summary metrics.

    Returns:
        One {metric, op, bound, value, passed} record per condition; a metric
        missing from the summary fails
    """
    results = []
    for metric, condition in config.get("assert", {}).items():
        value = summary.get(metric)
        for op, bound in condition.items():
            passed = value is not None and bool(ASSERT_OPERATORS[op](value, bound))
            results.append({"metric": metric, "op": op, "bound": bound, "value": value, "passed": passed})
            if not passed:
                logger.warning(f"Assertion failed: {metric} {op} {bound} (value {value})")
    return results
