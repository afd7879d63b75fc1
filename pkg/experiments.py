"""
Experiment Runners

One runner per experiment kind. A runner turns a validated configuration into
tables and summary metrics; run_experiment writes them as provenance-stamped
CSV files plus a summary.json and checks the config's assert block.
"""

import json
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from coefficients import NemytskiiSpec, build_pair
from experiment_config import RuntimeSettings, config_hash, evaluate_assertions
from fbm import (
    QSpec,
    UniformGrid,
    build_noise_history,
    decompose_increment,
    fbm_covariance,
    fbm_path,
    sample_fbm_paths,
    sample_qfbm,
)
from holder_metrics import estimate_holder_exponent, fit_rate, mild_holder_norms, norm_report_row, pair_lags
from mild_solver import Coefficients, SolveConfig, SolveReport, apriori_growth_sweep, solve_mild
from sewing_engine import (
    SewingResult,
    ensemble_sewing,
    mild_young_germ,
    mild_young_integral,
    mixed_wiener_young_integral,
    sew,
    young_integral,
)
from slowfast_lab import (
    AveragingConfig,
    FastSpec,
    counterexample_constant,
    ergodic_deviation,
    moral_report,
    run_averaging_experiment,
    wiener_counterexample,
)
from spectral_core import DiagonalGenerator
from utils import LIBRARY_VERSION, child_seed, read_csv, write_csv

logger = logging.getLogger(__name__)

Tables = Dict[str, pd.DataFrame]
RunnerOutput = Tuple[Tables, Dict[str, Any], Dict[str, Dict[str, Any]]]

# Tables each experiment writes, besides summary.json
ARTIFACTS: Dict[str, Tuple[str, ...]] = {
    "fbm-cov": ("covariance",),
    "holder": ("variogram",),
    "young": ("level_diffs", "telemetry"),
    "mild-young": ("germ_error",),
    "mixed": ("agreement",),
    "sewing": ("level_diffs", "telemetry"),
    "solve": ("path", "norms"),
    "apriori": ("growth", "norms"),
    "ergodic": ("deviation", "replicas", "norms"),
    "average": ("distances", "summary", "norms"),
    "counterexample": ("counterexample",),
}


def _grid(config: Dict[str, Any]) -> UniformGrid:
    block = config["grid"]
    horizon = float(block["T"])
    if "dt" in block:
        return UniformGrid.over(horizon, int(round(horizon / float(block["dt"]))))
    return UniformGrid.over(horizon, int(block["n_steps"]))


def _generator(config: Dict[str, Any]) -> DiagonalGenerator:
    return DiagonalGenerator.from_config(config["generator"])


def _pair(config: Dict[str, Any], gen: DiagonalGenerator, q: QSpec):
    spec = NemytskiiSpec.from_config(config["coefficients"], gen.n_modes, q.m_modes)
    block = config["coefficients"]
    return build_pair(spec, gen, block.get("modulation", "cos"), block.get("modulation_g"))


def _x0(gen: DiagonalGenerator, amplitude: float) -> np.ndarray:
    x0 = np.zeros(gen.n_modes)
    x0[0] = amplitude
    if gen.n_modes > 1:
        x0[1] = 0.5 * amplitude
    return x0


def _rate_summary(prefix: str, fit) -> Dict[str, float]:
    return {f"{prefix}slope": fit.slope, f"{prefix}r_squared": fit.r_squared, f"{prefix}stderr": fit.stderr}


def _telemetry(result: SewingResult) -> pd.DataFrame:
    """Per level sewing telemetry; level 0 has no Cauchy difference."""
    levels = np.arange(result.levels + 1)
    return pd.DataFrame({
        "level": levels,
        "intervals": 2 ** levels,
        "diff_norm": np.concatenate([[np.nan], result.level_diffs]),
        "value_norm": result.value_norms,
    })


# ---------------------------------------------------------------------------
# fBm
# ---------------------------------------------------------------------------

def run_fbm_cov(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Empirical fBm covariance against the exact one on a subgrid of time pairs."""
    grid = _grid(config)
    seed = config["mc"]["seed"]
    replicas = config["mc"]["replicas"]
    sub = int(config["params"]["subgrid"])
    idx = (np.arange(1, sub + 1) * grid.n_steps) // sub
    times = grid.times[idx]
    rows = []
    for i, hurst in enumerate(config["params"]["hursts"]):
        paths = sample_fbm_paths(hurst, grid, child_seed(seed, i), replicas)[:, idx]
        empirical = paths.T @ paths / replicas
        exact = fbm_covariance(hurst, times[:, None], times[None, :])
        diag = np.diag(exact)
        stderr = np.sqrt((np.outer(diag, diag) + exact ** 2) / replicas)
        for a in range(sub):
            for b in range(sub):
                rows.append({
                    "H": hurst, "s": times[a], "t": times[b],
                    "empirical": empirical[a, b], "exact": exact[a, b],
                    "abs_error": abs(empirical[a, b] - exact[a, b]), "stderr": stderr[a, b],
                })
        logger.info(f"H={hurst}: max covariance error {np.max(np.abs(empirical - exact)):.4g}")
    table = pd.DataFrame(rows)
    summary = {
        "max_abs_error": float(table["abs_error"].max()),
        "max_error_in_stderr": float((table["abs_error"] / table["stderr"]).max()),
        "max_stderr": float(table["stderr"].max()),
    }
    return {"covariance": table}, summary, {}


def run_holder(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Variogram fit of E|beta_{s+l} - beta_s|^2 against l; slope estimates 2H."""
    grid = _grid(config)
    hurst = float(config["params"]["H"])
    lags = [int(l) for l in config["params"]["lags"]]
    paths = sample_fbm_paths(hurst, grid, child_seed(config["mc"]["seed"], 0), config["mc"]["replicas"])
    fit = estimate_holder_exponent(paths, grid.dt, lags)
    table = pd.DataFrame({
        "lag": lags,
        "tau": [l * grid.dt for l in lags],
        "mean_sq_increment": [float(np.mean((paths[:, l:] - paths[:, :-l]) ** 2)) for l in lags],
    })
    summary = _rate_summary("", fit)
    summary.update({"exponent": fit.slope / 2.0, "exponent_error": abs(fit.slope / 2.0 - hurst)})
    return {"variogram": table}, summary, {}


# ---------------------------------------------------------------------------
# Young and mild Young integrals
# ---------------------------------------------------------------------------

def run_young(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """int h dh against (h_T^2 - h_0^2) / 2 and the f = 1 germ against h_T - h_0."""
    grid = _grid(config)
    levels = config["grid"]["levels"]
    path = fbm_path(float(config["params"]["H"]), grid, child_seed(config["mc"]["seed"], 0))
    h = path.values
    exact = 0.5 * (h[-1] ** 2 - h[0] ** 2)
    rows = []
    results = {}
    telemetry = None
    for germ in ("trapezoid", "left"):
        result = young_integral(h, path, 0.0, grid.horizon, levels, germ=germ)
        results[germ] = float(result.value)
        if telemetry is None:
            telemetry = _telemetry(result)
        for level, diff in enumerate(result.level_diffs):
            rows.append({"germ": germ, "level": level + 1, "intervals": 2 ** (level + 1), "diff": diff})
    constant = young_integral(np.ones(len(grid)), path, 0.0, grid.horizon, levels)
    sums_gap = float(np.max(constant.level_diffs)) if levels else 0.0
    left_identity = exact - 0.5 * float(np.sum(np.diff(h) ** 2))
    summary = {
        "exact": exact,
        "trapezoid_value": results["trapezoid"],
        "left_value": results["left"],
        "relative_error": abs(results["trapezoid"] - exact) / abs(exact),
        "left_relative_error": abs(results["left"] - exact) / abs(exact),
        "left_identity_gap": abs(results["left"] - left_identity),
        "constant_germ_error": max(sums_gap, abs(float(constant.value) - (h[-1] - h[0]))),
    }
    return {"level_diffs": pd.DataFrame(rows), "telemetry": telemetry}, summary, {}


def run_mild_young(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Size of the sewn integral minus its germ over intervals [0, t] of growing length."""
    grid = _grid(config)
    gen = _generator(config)
    params = config["params"]
    sizes = [int(k) for k in params["interval_steps"]]
    weights = 1.0 / (1.0 + np.arange(gen.n_modes)) ** 2
    seed = config["mc"]["seed"]
    errors = np.zeros((config["mc"]["replicas"], len(sizes)))
    for r in range(errors.shape[0]):
        h = fbm_path(float(params["H"]), grid, child_seed(seed, 0, r))
        f = fbm_path(float(params["H_integrand"]), grid, child_seed(seed, 1, r))
        f_vals = f.values[:, None] * weights
        xi = mild_young_germ(gen, f_vals, h, grid)
        for j, k in enumerate(sizes):
            t = k * grid.dt
            sewn = sew(gen, xi, 0.0, t, int(np.log2(k)))
            errors[r, j] = np.linalg.norm(sewn.value - xi(0.0, t))
    mean_errors = errors.mean(axis=0)
    lengths = [k * grid.dt for k in sizes]
    fit = fit_rate(lengths, mean_errors)
    table = pd.DataFrame({"steps": sizes, "length": lengths, "mean_error": mean_errors})
    summary = _rate_summary("", fit)
    summary["expected_exponent"] = float(params["H"] + params["H_integrand"])
    return {"germ_error": table}, summary, {}


def run_mixed(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Mixed Wiener-Young integral against the left-point sewn Young integral on the same drivers."""
    gen = _generator(config)
    q = QSpec.from_config(config["q"])
    params = config["params"]
    hurst = float(params["H"])
    s = float(params.get("s", 0.5))
    t = s + float(config["grid"]["T"])
    cells = int(config["grid"]["n_steps"])
    local = UniformGrid.over(t - s, cells)
    replicas = config["mc"]["replicas"]

    rng = np.random.default_rng(child_seed(config["mc"]["seed"], 2))
    base0 = rng.standard_normal((gen.n_modes, q.m_modes)) / (1.0 + np.arange(gen.n_modes))[:, None]
    base1 = rng.standard_normal((gen.n_modes, q.m_modes)) / (1.0 + np.arange(gen.n_modes))[:, None]
    r_times = s + local.times
    g_vals = np.cos(r_times)[:, None, None] * base0 + np.sin(2.0 * r_times)[:, None, None] * base1

    offsets = local.times[1:]
    history = build_noise_history(
        hurst, s, offsets, child_seed(config["mc"]["seed"], 0), batch_shape=(replicas, q.m_modes)
    )
    mixed = mixed_wiener_young_integral(gen, g_vals, history, q, hurst, s, t)
    increments = decompose_increment(history, hurst, s, offsets).total * q.sqrt_lam
    driver = np.concatenate([np.zeros((1,) + increments.shape[1:]), increments])
    young = mild_young_integral(
        gen, g_vals, driver, 0.0, local.horizon, config["grid"]["levels"], germ="left", grid=local
    ).value
    gaps = np.linalg.norm(mixed - young, axis=-1)
    sizes = np.linalg.norm(young, axis=-1)
    rel = gaps / np.maximum(sizes, 1e-300)
    table = pd.DataFrame({
        "replica": np.arange(replicas), "mixed_norm": np.linalg.norm(mixed, axis=-1),
        "young_norm": sizes, "abs_gap": gaps, "relative_gap": rel,
    })
    summary = {"max_relative_error": float(rel.max()), "median_relative_error": float(np.median(rel))}
    return {"agreement": table}, summary, {}


# ---------------------------------------------------------------------------
# Stochastic sewing and the solver
# ---------------------------------------------------------------------------

def _ensemble_driver(config: Dict[str, Any], q: QSpec, grid: UniformGrid):
    return sample_qfbm(q, float(config["params"]["H"]), grid, child_seed(config["mc"]["seed"], 0),
                       replicas=config["mc"]["replicas"])


def run_sewing(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Ensemble Cauchy differences of the dyadic sums of int S g(X) dB."""
    grid = _grid(config)
    gen = _generator(config)
    q = QSpec.from_config(config["q"])
    levels = config["grid"]["levels"]
    pair = _pair(config, gen, q)
    driver = _ensemble_driver(config, q, grid)
    x0 = _x0(gen, float(config["params"].get("x0_amplitude", 0.5)))
    path = solve_mild(gen, Coefficients.from_pair(pair), driver, SolveConfig(dt=grid.dt, x0=x0))
    g_vals = pair.g(path.values)
    xi = mild_young_germ(gen, g_vals, driver, grid)
    lo, hi = (int(v) for v in config["params"]["report_levels"])
    rows = []
    summary: Dict[str, Any] = {}
    telemetry = None
    for p in config["mc"]["p"]:
        result = ensemble_sewing(gen, xi, 0.0, grid.horizon, levels, p)
        if telemetry is None:
            telemetry = _telemetry(result)
        diffs = result.level_diffs
        ratios = diffs[1:] / np.maximum(diffs[:-1], 1e-300)
        for level, diff in enumerate(diffs):
            rows.append({
                "p": p, "level": level + 1, "intervals": 2 ** (level + 1), "diff": diff,
                "ratio": ratios[level - 1] if level else np.nan,
            })
        window = ratios[max(lo - 1, 0): hi - 1]
        key = "" if p == config["mc"]["p"][0] else f"p{p:g}_"
        summary[f"{key}mean_ratio"] = float(np.mean(window))
        summary[f"{key}max_ratio"] = float(np.max(window))
    meta = {"telemetry": {"p": config["mc"]["p"][0]}}
    return {"level_diffs": pd.DataFrame(rows), "telemetry": telemetry}, summary, meta


def run_solve(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """One mild solution with Richardson and sewing telemetry."""
    grid = _grid(config)
    gen = _generator(config)
    q = QSpec.from_config(config["q"])
    params = config["params"]
    pair = _pair(config, gen, q)
    seed = child_seed(config["mc"]["seed"], 0)
    driver = sample_qfbm(q, float(params["H"]), grid, seed)
    cfg = SolveConfig(
        dt=grid.dt,
        x0=_x0(gen, float(params["x0_amplitude"])),
        levels=config["grid"]["levels"],
        scheme=params.get("scheme", "exp_euler"),
        picard_iterations=int(params.get("picard_iterations", 1)),
        richardson=bool(params.get("richardson", False)),
    )
    report = SolveReport(cfg.scheme, cfg.dt, grid.n_steps, seeds=[config["mc"]["seed"]])
    path = solve_mild(gen, Coefficients.from_pair(pair), driver, cfg, report)
    frame = pd.DataFrame(path.values, columns=[f"x{k}" for k in range(gen.n_modes)])
    frame.insert(0, "t", grid.times)
    summary = report.to_dict()
    alpha = float(params["alpha"])
    summary["mild_holder_norm"] = float(mild_holder_norms(gen, path.values, grid.dt, alpha))
    norms = pd.DataFrame([norm_report_row("mild_holder", alpha, summary["mild_holder_norm"], grid.n_steps)])
    _, strategy = pair_lags(grid.n_steps)
    meta = {"path": {"pair_strategy": strategy}, "norms": {"pair_strategy": strategy}}
    return {"path": frame, "norms": norms}, summary, meta


def run_apriori(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Driver scaling sweep of the solution seminorm."""
    grid = _grid(config)
    gen = _generator(config)
    q = QSpec.from_config(config["q"])
    params = config["params"]
    pair = _pair(config, gen, q)
    driver = sample_qfbm(q, float(params["H"]), grid, child_seed(config["mc"]["seed"], 0))
    cfg = SolveConfig(dt=grid.dt, x0=_x0(gen, float(params["x0_amplitude"])))
    sweep = apriori_growth_sweep(
        gen, Coefficients.from_pair(pair), driver, cfg,
        scales=params["scales"], gamma_bar=float(params["gamma_bar"]), gamma=float(params["gamma"]),
    )
    table = pd.DataFrame({
        "scale": sweep["scales"], "driver_norm": sweep["driver_norms"], "solution_norm": sweep["solution_norms"],
    })
    norms = pd.DataFrame(
        [norm_report_row("holder", float(params["gamma"]), v, grid.n_steps) for v in sweep["driver_norms"]]
        + [norm_report_row("mild_holder", float(params["gamma_bar"]), v, grid.n_steps)
           for v in sweep["solution_norms"]]
    )
    norms.insert(0, "scale", list(sweep["scales"]) * 2)
    summary = _rate_summary("", sweep["fit"])
    return {"growth": table, "norms": norms}, summary, {}


# ---------------------------------------------------------------------------
# Slow-fast experiments
# ---------------------------------------------------------------------------

def run_ergodic(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Negative Holder deviation of g(x, Y_{t/eps}) from its average on the grid, per epsilon."""
    gen = _generator(config)
    q = QSpec.from_config(config["q"])
    params = config["params"]
    pair = _pair(config, gen, q)
    fast = FastSpec.from_config(config["fast"])
    p_values = config["mc"]["p"]
    x = _x0(gen, float(params.get("x0_amplitude", 0.5)))
    delta = float(params["delta"])
    obs_steps = _grid(config).n_steps
    replicas = config["mc"]["replicas"]
    report = ergodic_deviation(
        pair, fast, x, delta, float(p_values[0]), params["epsilons"],
        replicas, config["mc"]["seed"], horizon=float(config["grid"]["T"]),
        threads=settings.threads, obs_steps=obs_steps,
    )
    rows, replica_rows, norm_rows = [], [], []
    for eps, norms, strategy in zip(report.epsilons, report.per_replica, report.pair_strategies):
        for p in p_values:
            value = float(np.mean(norms ** p) ** (1.0 / p))
            rows.append({"epsilon": eps, "p": p, "value": value, "pair_strategy": strategy})
            norm_rows.append(dict(epsilon=eps, **norm_report_row("neg_holder", delta, value, obs_steps, replicas, p)))
        replica_rows.extend({"epsilon": eps, "replica": r, "deviation": v} for r, v in enumerate(norms))
    table = pd.DataFrame(rows)
    table["stderr"] = np.nan
    table.loc[table["p"] == p_values[0], "stderr"] = report.stderrs
    summary: Dict[str, Any] = {"values": report.values}
    if report.fit is not None:
        summary.update(_rate_summary("", report.fit))
    strategies = ",".join(sorted(set(report.pair_strategies)))
    meta = {name: {"pair_strategy": strategies} for name in ("deviation", "replicas", "norms")}
    tables = {"deviation": table, "replicas": pd.DataFrame(replica_rows), "norms": pd.DataFrame(norm_rows)}
    return tables, summary, meta


def _averaging_config(config: Dict[str, Any]) -> AveragingConfig:
    params = config["params"]
    return AveragingConfig(
        epsilons=tuple(params["epsilons"]),
        T=float(config["grid"]["T"]),
        alpha=float(params["alpha"]),
        H=float(params["H"]),
        n_modes=int(config["generator"]["n_modes"]),
        m_modes=int(config["q"]["m_modes"]),
        replicas=int(config["mc"]["replicas"]),
        p=float(config["mc"]["p"][0]),
        seed=int(config["mc"]["seed"]),
        q_exponent=float(config["q"].get("q_exponent", 1.5)),
        slow_steps=params.get("slow_steps"),
        x0_amplitude=float(params["x0_amplitude"]),
        fast_sampling=params.get("fast_sampling", "cell_mean"),
    )


def run_average(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Distances between X^eps and the averaged solution per epsilon."""
    cfg = _averaging_config(config)
    fast = FastSpec.from_config(config["fast"])
    spec = NemytskiiSpec.from_config(config["coefficients"], cfg.n_modes, cfg.m_modes)
    result = run_averaging_experiment(
        cfg, fast, spec, config["coefficients"].get("modulation", "cos"), threads=settings.threads
    )
    rows = [
        {"epsilon": eps, "replica": r, "distance": d, "sup_distance": s}
        for eps, dists, sups in zip(result.epsilons, result.distances, result.sup_distances)
        for r, (d, s) in enumerate(zip(dists, sups))
    ]
    table = pd.DataFrame({
        "epsilon": result.epsilons, "median": result.medians, "q90": result.q90s,
        "sup_median": result.sup_medians, "n": [cfg.replicas] * len(result.epsilons),
    })
    summary: Dict[str, Any] = {
        "medians": result.medians,
        "q90s": result.q90s,
        "strictly_decreasing": result.strictly_decreasing,
        "shrinkage": result.shrinkage,
        "sup_medians": result.sup_medians,
        "sup_strictly_decreasing": result.sup_strictly_decreasing,
        "sup_shrinkage": result.sup_shrinkage,
        "lp_norms": result.lp_norms,
    }
    if config["params"].get("moral"):
        wiener = [
            wiener_counterexample(eps, 1.0, int(config["params"].get("wiener_replicas", 20000)),
                                  child_seed(cfg.seed, 2, i))
            for i, eps in enumerate(config["params"].get("wiener_epsilons", [0.1, 0.01]))
        ]
        moral = moral_report(result, wiener)
        summary["wiener_not_vanishing"] = moral["wiener_not_vanishing"]
        summary["moral_holds"] = moral["averaging_decreasing"] and moral["wiener_not_vanishing"]
    norms = pd.DataFrame([
        dict(epsilon=eps, **norm_report_row("b_alpha_p", cfg.alpha, value, cfg.steps, cfg.replicas, cfg.p))
        for eps, value in zip(result.epsilons, result.lp_norms)
    ])
    _, strategy = pair_lags(cfg.steps)
    meta = {name: {"pair_strategy": strategy} for name in ("distances", "summary", "norms")}
    return {"distances": pd.DataFrame(rows), "summary": table, "norms": norms}, summary, meta


def run_counterexample(config: Dict[str, Any], settings: RuntimeSettings) -> RunnerOutput:
    """Monte Carlo E(X^eps_t - X_bar_t)^2 in the Wiener-driven example."""
    params = config["params"]
    seed = config["mc"]["seed"]
    rows = [
        wiener_counterexample(
            float(eps), float(params["t"]), config["mc"]["replicas"], child_seed(seed, i),
            fast_step=float(params["fast_step"]), integrand=params.get("integrand", "cos"),
        )
        for i, eps in enumerate(params["epsilons"])
    ]
    table = pd.DataFrame(rows, columns=["eps", "t", "estimate", "stderr", "expected"])
    errors = (table["estimate"] - table["expected"]).abs().to_numpy()
    stderr = table["stderr"].to_numpy()
    summary = {
        "estimate": float(table["estimate"].iloc[0]),
        "expected": float(table["expected"].iloc[0]),
        "constant": counterexample_constant(),
        "abs_error": float(errors[0]),
        "max_abs_error": float(errors.max()),
        "max_error_in_stderr": float(np.max(np.where(stderr > 0, errors / np.where(stderr > 0, stderr, 1.0), 0.0))),
    }
    return {"counterexample": table}, summary, {}


RUNNERS: Dict[str, Callable[[Dict[str, Any], RuntimeSettings], RunnerOutput]] = {
    "fbm-cov": run_fbm_cov,
    "holder": run_holder,
    "young": run_young,
    "mild-young": run_mild_young,
    "mixed": run_mixed,
    "sewing": run_sewing,
    "solve": run_solve,
    "apriori": run_apriori,
    "ergodic": run_ergodic,
    "average": run_average,
    "counterexample": run_counterexample,
}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def _remove_outputs(paths: List[str], directory: str) -> None:
    for path in paths:
        try:
            os.remove(path)
        except OSError:
            pass
    try:
        os.rmdir(directory)
    except OSError:
        pass


def run_experiment(
    config: Dict[str, Any],
    out_dir: Optional[str] = None,
    settings: Optional[RuntimeSettings] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Run one configured experiment and write its artifacts.

    Args:
        config: Completed, validated configuration
        out_dir: Output directory (config output.dir otherwise)
        settings: Runtime settings (environment otherwise)
        seed: Master seed overriding mc.seed

    Returns:
        Dictionary with success flag, summary, assertion results, written files
        and the error message on failure
    """
    settings = settings or RuntimeSettings()
    if seed is not None:
        config = dict(config, mc=dict(config["mc"], seed=int(seed)))
    kind = config["experiment"]
    digest = config_hash(config)
    directory = os.path.join(out_dir or config["output"]["dir"], kind)
    written: List[str] = []
    summary_path = os.path.join(directory, "summary.json")
    if os.path.exists(summary_path):
        try:
            with open(summary_path) as f:
                if json.load(f).get("config_hash") == digest:
                    logger.info(f"{kind}: same config hash as the previous run in {directory}, overwriting")
        except (OSError, ValueError):
            pass
    stale = [os.path.join(directory, f"{name}.csv") for name in ARTIFACTS.get(kind, ())] + [summary_path]
    _remove_outputs([path for path in stale if os.path.exists(path)], directory)
    try:
        logger.info(f"Running {kind} (config {digest[:12]}, seed {config['mc']['seed']})")
        tables, summary, meta = RUNNERS[kind](config, settings)
        summary = _jsonable(summary)
        for name, frame in tables.items():
            header = {
                "config_hash": digest,
                "library_version": LIBRARY_VERSION,
                "experiment": kind,
                "master_seed": config["mc"]["seed"],
            }
            header.update(meta.get(name, {}))
            written.append(write_csv(os.path.join(directory, f"{name}.csv"), frame, header))
        assertions = evaluate_assertions(config, summary)
        passed = all(a["passed"] for a in assertions)
        block = {
            "experiment": kind,
            "config_hash": digest,
            "library_version": LIBRARY_VERSION,
            "master_seed": config["mc"]["seed"],
            "summary": summary,
            "assertions": _jsonable(assertions),
            "passed": passed,
        }
        with open(summary_path, "w") as f:
            json.dump(block, f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(summary_path)
        return {
            "success": True,
            "experiment": kind,
            "config_hash": digest,
            "summary": summary,
            "assertions": assertions,
            "passed": passed,
            "files": written,
        }
    except Exception as e:
        logger.error(f"{kind} failed: {e}")
        _remove_outputs(written, directory)
        return {"success": False, "experiment": kind, "config_hash": digest, "error": str(e), "files": []}


def ratefit(path: str, x_column: str, y_column: str) -> Dict[str, Any]:
    """
    Log-log fit of two columns of an experiment CSV.

    Returns:
        Dictionary with success flag and the RateFit fields, or the error
    """
    try:
        frame = read_csv(path)
        for column in (x_column, y_column):
            if column not in frame.columns:
                raise ValueError(f"Column {column!r} not in {path} (have {list(frame.columns)})")
        data = frame[[x_column, y_column]].dropna()
        fit = fit_rate(data[x_column].to_numpy(), data[y_column].to_numpy())
        return {"success": True, "x": x_column, "y": y_column, **fit.to_dict()}
    except (OSError, ValueError) as e:
        return {"success": False, "error": str(e)}
