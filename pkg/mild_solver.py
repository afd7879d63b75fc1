"""
Mild Solver Module

Pathwise mild solution of dx = (Ax + f(t, x)) dt + g(t, x) dh with the
exponential left-point scheme

    x_{k+1} = S_dt x_k + (1 - exp(-mu dt)) / mu * f(t_k, x_k) + S_dt g(t_k, x_k) dh_k,

the Picard map used for contraction diagnostics, and the residue comparison
of two perturbed equations driven by the same path.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from fbm import QfbmPath, UniformGrid
from holder_metrics import RateFit, SampledPath, fit_rate, holder_norm, mild_holder_norms
from sewing_engine import DEFAULT_LEVELS, drift_germ, mild_young_germ, sew, sew_cumulative
from spectral_core import DiagonalGenerator, apply_semigroup

logger = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6

DriftMap = Callable[[float, np.ndarray], np.ndarray]
DiffusionMap = Callable[[float, np.ndarray], np.ndarray]


class SolverDivergenceError(RuntimeError):
    """State became non-finite or left the blow-up guard."""

    def __init__(self, step: int, time: float, norm: float):
        self.step = step
        self.time = time
        self.norm = norm
        super().__init__(f"Mild solver diverged at step {step} (t={time:.6g}, |x|={norm:.3e})")


@dataclass(frozen=True)
class Coefficients:
    """
    Time-dependent drift f(t, x) and diffusion g(t, x).

    x has shape (..., n_modes); g returns (..., n_modes, m_modes).
    """

    f: DriftMap
    g: DiffusionMap
    name: str = "custom"

    @classmethod
    def constant(cls, b: np.ndarray, c: np.ndarray) -> "Coefficients":
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)

        def drift(t: float, x: np.ndarray) -> np.ndarray:
            return np.broadcast_to(b, np.shape(x)).copy()

        def diffusion(t: float, x: np.ndarray) -> np.ndarray:
            return np.broadcast_to(c, np.shape(x)[:-1] + c.shape).copy()

        return cls(drift, diffusion, name="constant")

    @classmethod
    def from_pair(
        cls,
        pair: Any,
        fast_values: Optional[np.ndarray] = None,
        fast_dt: Optional[float] = None,
        slow_dt: Optional[float] = None,
    ) -> "Coefficients":
        """
        Freeze a coefficient pair along a fast path.

        Args:
            pair: CoefficientPair with f(x, y) and g(x, y)
            fast_values: Fast states (n_fast + 1,) or (replicas, n_fast + 1);
                None for an autonomous pair
            fast_dt: Spacing of the fast states in slow time
            slow_dt: Step of the slow grid; when given, the modulations m_f(y)
                and m_g(y) are averaged over [t, t + slow_dt)

        Returns:
            Coefficients with y taken piecewise constant: y(t) = y[floor(t / fast_dt)]
        """
        if fast_values is None:
            return cls(lambda t, x: pair.f(x), lambda t, x: pair.g(x), name="autonomous")
        if not fast_dt or fast_dt <= 0:
            raise ValueError("A positive fast_dt is needed with fast_values")
        fast_values = np.asarray(fast_values, dtype=float)
        last = fast_values.shape[-1] - 1

        if slow_dt is not None:
            if slow_dt <= 0:
                raise ValueError(f"slow_dt must be positive, got {slow_dt}")

            def cell_mean(modulation: Callable[[np.ndarray], np.ndarray], t: float) -> np.ndarray:
                first = int(np.floor(t / fast_dt + 1e-9))
                stop = max(int(np.ceil((t + slow_dt) / fast_dt - 1e-9)), first + 1)
                edges = np.clip(np.arange(first, stop + 1) * fast_dt, t, t + slow_dt)
                edges[0], edges[-1] = t, t + slow_dt
                weights = np.diff(edges)
                weights /= weights.sum()
                idx = np.minimum(np.arange(first, stop), last)
                return np.tensordot(modulation(fast_values[..., idx]), weights, axes=([-1], [0]))

            def drift(t: float, x: np.ndarray) -> np.ndarray:
                return cell_mean(pair.modulation_f, t)[..., None] * pair.base_f(x)

            def diffusion(t: float, x: np.ndarray) -> np.ndarray:
                return cell_mean(pair.modulation_g, t)[..., None, None] * pair.base_g(x)

            return cls(drift, diffusion, name="cell_mean_fast")

        def y_at(t: float) -> np.ndarray:
            k = min(int(np.floor(t / fast_dt + 1e-9)), last)
            return fast_values[..., k]

        return cls(lambda t, x: pair.f(x, y_at(t)), lambda t, x: pair.g(x, y_at(t)), name="frozen_fast")


@dataclass(frozen=True)
class SolveConfig:
    dt: float
    x0: np.ndarray
    levels: int = DEFAULT_LEVELS
    scheme: str = "exp_euler"
    picard_iterations: int = 1
    richardson: bool = False
    blowup_factor: float = BLOWUP_FACTOR

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Step must be positive, got dt={self.dt}")
        if self.scheme not in ("exp_euler", "picard"):
            raise ValueError(f"Unknown scheme: {self.scheme}")
        if self.scheme == "picard" and self.picard_iterations < 1:
            raise ValueError("Picard scheme needs at least one iteration")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


@dataclass
class SolveReport:
    scheme: str
    dt: float
    steps: int
    richardson_error: Optional[float] = None
    max_norm: float = 0.0
    seeds: List[int] = field(default_factory=list)
    picard_distances: List[float] = field(default_factory=list)
    sewing_error: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "dt": self.dt,
            "steps": self.steps,
            "richardson_error": self.richardson_error,
            "max_norm": self.max_norm,
            "seeds": list(self.seeds),
            "picard_distances": list(self.picard_distances),
            "sewing_error": self.sewing_error,
        }


def _initial_state(gen: DiagonalGenerator, x0: np.ndarray, driver_values: np.ndarray) -> np.ndarray:
    if x0.shape[-1] != gen.n_modes:
        raise ValueError(f"x0 has {x0.shape[-1]} modes, generator has {gen.n_modes}")
    batch = driver_values.shape[1:-1]
    return np.broadcast_to(x0, batch + (gen.n_modes,)).copy()


def _check_driver(cfg_dt: float, driver: QfbmPath) -> None:
    if abs(driver.grid.dt - cfg_dt) > 1e-12 * cfg_dt:
        raise ValueError(f"Driver step {driver.grid.dt} differs from solver step {cfg_dt}")


def _guard(x: np.ndarray, limit: float, step: int, time: float) -> float:
    norm = float(np.max(np.linalg.norm(x, axis=-1)))
    if not np.isfinite(norm) or norm > limit:
        raise SolverDivergenceError(step, time, norm)
    return norm


def _exp_euler(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    driver_values: np.ndarray,
    dt: float,
    x0: np.ndarray,
    limit: float,
    residual: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exponential left-point steps; with residual y the equation x = y + integrals is solved."""
    n_steps = driver_values.shape[0] - 1
    decay = np.exp(-gen.mu * dt)
    filt = gen.drift_filter(dt)
    x = _initial_state(gen, x0, driver_values)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        t = k * dt
        dh = driver_values[k + 1] - driver_values[k]
        noise = np.einsum("...nm,...m->...n", coefficients.g(t, x), dh)
        if residual is None:
            x = decay * x + filt * coefficients.f(t, x) + decay * noise
        else:
            x = residual[k + 1] + decay * (x - residual[k]) + filt * coefficients.f(t, x) + decay * noise
        _guard(x, limit, k + 1, t + dt)
        out[k + 1] = x
    return out


def picard_step(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    h: QfbmPath,
    y: SampledPath,
    x0: Optional[np.ndarray] = None,
) -> SampledPath:
    """
    One application of the Picard map: S_t y_0 + int S_{t-r} f(r, y_r) dr + int S_{t-r} g(r, y_r) dh_r.

    Both integrals are sewn at grid resolution through mild additivity; the
    map fixes the exponential Euler solution exactly.

    Args:
        gen: Generator
        coefficients: Drift and diffusion
        h: Driver on the grid of y
        y: Input path with y_0 = x0
        x0: Initial datum (default y_0)

    Returns:
        The image path
    """
    values = y.values
    start = values[0] if x0 is None else np.asarray(x0, dtype=float)
    if not np.allclose(values[0], start, rtol=0, atol=1e-12):
        raise ValueError("Picard map needs y_0 == x0")
    grid = y.grid
    _check_driver(grid.dt, h)
    times = grid.times
    f_vals = np.stack([coefficients.f(t, values[k]) for k, t in enumerate(times)])
    g_vals = np.stack([coefficients.g(t, values[k]) for k, t in enumerate(times)])
    drift = sew_cumulative(gen, drift_germ(gen, f_vals, grid))
    noise = sew_cumulative(gen, mild_young_germ(gen, g_vals, h, grid))
    flow = np.exp(-np.multiply.outer(times, gen.mu)).reshape(
        (len(times),) + (1,) * (values.ndim - 2) + (gen.n_modes,)
    ) * start
    return SampledPath(grid, flow + drift + noise)


def _picard_solve(
    gen: DiagonalGenerator, coefficients: Coefficients, h: QfbmPath, cfg: SolveConfig, report: SolveReport
) -> np.ndarray:
    x0 = _initial_state(gen, cfg.x0, h.values)
    path = SampledPath(h.grid, np.broadcast_to(x0, (len(h.grid),) + x0.shape).copy())
    for _ in range(cfg.picard_iterations):
        image = picard_step(gen, coefficients, h, path, x0)
        report.picard_distances.append(float(np.max(np.abs(image.values - path.values))))
        path = image
        _guard(path.values, cfg.blowup_factor * (1.0 + float(np.linalg.norm(cfg.x0))), h.grid.n_steps, h.grid.horizon)
    if h.grid.n_steps % 2 ** cfg.levels == 0:
        g_vals = np.stack([coefficients.g(t, path.values[k]) for k, t in enumerate(h.grid.times)])
        result = sew(gen, mild_young_germ(gen, g_vals, h, h.grid), 0.0, h.grid.horizon, cfg.levels)
        report.sewing_error = result.error_proxy
    return path.values


def solve_mild(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    h: QfbmPath,
    cfg: SolveConfig,
    report: Optional[SolveReport] = None,
) -> SampledPath:
    """
    Mild solution on the grid of the driver.

    Args:
        gen: Generator
        coefficients: Drift and diffusion (or a pair frozen via Coefficients.from_pair)
        h: Driver; an ensemble driver (n+1, R, m) solves R replicas at once
        cfg: Step, initial datum and scheme
        report: Optional SolveReport filled with metadata

    Returns:
        SampledPath of states (n+1, n_modes) or (n+1, R, n_modes)
    """
    _check_driver(cfg.dt, h)
    report = report if report is not None else SolveReport(cfg.scheme, cfg.dt, h.grid.n_steps)
    limit = cfg.blowup_factor * (1.0 + float(np.linalg.norm(cfg.x0)))
    if cfg.scheme == "picard":
        values = _picard_solve(gen, coefficients, h, cfg, report)
    else:
        values = _exp_euler(gen, coefficients, h.values, cfg.dt, cfg.x0, limit)
    if cfg.richardson:
        if h.grid.n_steps % 2:
            raise ValueError("Richardson estimate needs an even number of steps")
        coarse = _exp_euler(gen, coefficients, h.values[::2], 2 * cfg.dt, cfg.x0, limit)
        report.richardson_error = float(np.max(np.linalg.norm(values[::2] - coarse, axis=-1)))
    report.max_norm = float(np.max(np.linalg.norm(values, axis=-1)))
    logger.debug(f"Solved {h.grid.n_steps} steps ({cfg.scheme}), max |x| = {report.max_norm:.4g}")
    return SampledPath(h.grid, values)


def residue_compare(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    h: QfbmPath,
    y: SampledPath,
    y_bar: SampledPath,
    alpha: float,
) -> Dict[str, float]:
    """
    Solve x = y + integrals(x) and x_bar = y_bar + integrals(x_bar) with one driver.

    Args:
        gen: Generator
        coefficients: Drift and diffusion
        h: Driver on the grid of y
        y: Residual path
        y_bar: Perturbed residual path, same initial value
        alpha: Mild Holder exponent of the comparison

    Returns:
        {"solution_distance", "residual_distance", "ratio"}; ratio is NaN when y == y_bar
    """
    if not np.allclose(y.values[0], y_bar.values[0], rtol=0, atol=1e-12):
        raise ValueError("Residue comparison needs y_0 == y_bar_0")
    _check_driver(y.grid.dt, h)
    dt = y.grid.dt
    x0 = y.values[0]
    limit = BLOWUP_FACTOR * (1.0 + float(np.linalg.norm(x0)))
    x = _exp_euler(gen, coefficients, h.values, dt, x0, limit, residual=y.values)
    x_bar = _exp_euler(gen, coefficients, h.values, dt, x0, limit, residual=y_bar.values)
    solution = float(mild_holder_norms(gen, x - x_bar, dt, alpha))
    residual = float(mild_holder_norms(gen, y.values - y_bar.values, dt, alpha))
    ratio = solution / residual if residual > 0 else float("nan")
    return {"solution_distance": solution, "residual_distance": residual, "ratio": ratio}


def contraction_ratio(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    h: QfbmPath,
    y: SampledPath,
    y_bar: SampledPath,
    rho: float,
    gamma_bar: float,
) -> float:
    """|A y - A y_bar| / |y - y_bar| in the mild Holder seminorm of exponent gamma_bar on [0, rho]."""
    k = y.grid.index_of(rho)
    if k < 2:
        raise ValueError(f"Interval [0, {rho}] holds fewer than two steps")
    grid = UniformGrid(y.grid.dt, k)
    head = QfbmPath(grid, h.values[: k + 1] - h.values[0])
    y_head = SampledPath(grid, y.values[: k + 1])
    y_bar_head = SampledPath(grid, y_bar.values[: k + 1])
    image = picard_step(gen, coefficients, head, y_head)
    image_bar = picard_step(gen, coefficients, head, y_bar_head)
    top = float(mild_holder_norms(gen, image.values - image_bar.values, grid.dt, gamma_bar))
    bottom = float(mild_holder_norms(gen, y_head.values - y_bar_head.values, grid.dt, gamma_bar))
    if bottom == 0:
        raise ValueError("Paths coincide on the interval")
    return top / bottom


def apriori_growth_sweep(
    gen: DiagonalGenerator,
    coefficients: Coefficients,
    h: QfbmPath,
    cfg: SolveConfig,
    scales: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    gamma_bar: float = 0.55,
    gamma: float = 0.7,
) -> Dict[str, Any]:
    """
    Solve with drivers c * h and relate log(1 + |x|) to log(1 + c |h|).

    Returns:
        {"scales", "driver_norms", "solution_norms", "fit"}, fit a RateFit of
        (1 + solution norm) against (1 + driver norm) on log-log axes
    """
    driver_norm = holder_norm(SampledPath(h.grid, h.values), gamma)
    driver_norms, solution_norms = [], []
    for c in scales:
        path = solve_mild(gen, coefficients, h.scaled(c), cfg)
        seminorm = float(mild_holder_norms(gen, path.values, h.grid.dt, gamma_bar))
        driver_norms.append(c * driver_norm)
        solution_norms.append(seminorm)
        logger.info(f"Driver scale {c}: |h| = {c * driver_norm:.4g}, |x| = {seminorm:.4g}")
    fit: RateFit = fit_rate(1.0 + np.asarray(driver_norms), 1.0 + np.asarray(solution_norms))
    return {
        "scales": list(scales),
        "driver_norms": driver_norms,
        "solution_norms": solution_norms,
        "fit": fit,
    }


def flow_path(gen: DiagonalGenerator, grid: UniformGrid, x0: np.ndarray) -> SampledPath:
    """t -> S_t x0 on the grid."""
    return SampledPath(grid, np.stack([apply_semigroup(gen, t, x0) for t in grid.times]))
