"""
Holder Metrics Module

Estimators for the norm-like quantities of paths on uniform grids: classical
and mild Holder seminorms, negative-exponent Holder norms of integrands, the
L^p(Omega) mild Holder norm of an ensemble, and log-log rate fitting.

Pairwise sups run over every grid pair for grids of at most MAX_ALL_PAIRS
steps; beyond that only lags that are powers of two are visited.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from fbm import UniformGrid
from spectral_core import DiagonalGenerator

logger = logging.getLogger(__name__)

MAX_ALL_PAIRS = 2048
NORM_REPORT_COLUMNS = ("norm_kind", "gamma_or_delta", "p", "value", "n_grid", "n_replicas")
NORM_KINDS = ("holder", "mild_holder", "neg_holder", "b_alpha_p")


@dataclass(frozen=True, eq=False)
class SampledPath:
    """
    Path t_k -> values[k] of states (n_steps + 1, n_modes) or of operator
    values (n_steps + 1, n_modes, m_modes).
    """

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(self.grid):
            raise ValueError(
                f"Path has {values.shape[0]} values for a grid of {len(self.grid)} points"
            )
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __sub__(self, other: "SampledPath") -> "SampledPath":
        if len(other.grid) != len(self.grid) or other.grid.dt != self.grid.dt:
            raise ValueError("Paths live on different grids")
        return SampledPath(self.grid, self.values - other.values)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: int
    stderr: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """
    Replicas of a path on a common grid with their seeds.

    values has shape (replicas, n_steps + 1, n_modes).
    """

    grid: UniformGrid
    values: np.ndarray
    seeds: Tuple[int, ...]
    p_values: Tuple[float, ...] = (2.0,)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.shape[0] == 0:
            raise ValueError("Ensemble has no replicas")
        if values.shape[1] != len(self.grid):
            raise ValueError("Replica length does not match the grid")
        if len(self.seeds) != values.shape[0]:
            raise ValueError(f"Need one seed per replica, got {len(self.seeds)} for {values.shape[0]}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("Replica seeds must be distinct")
        if any(p < 1 for p in self.p_values):
            raise ValueError("Moments p must be at least 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @classmethod
    def from_paths(cls, paths: Sequence[SampledPath], seeds: Sequence[int], p_values: Sequence[float] = (2.0,)) -> "Ensemble":
        if not paths:
            raise ValueError("Ensemble has no replicas")
        return cls(paths[0].grid, np.stack([p.values for p in paths]), tuple(seeds), tuple(p_values))

    @property
    def replicas(self) -> int:
        return int(self.values.shape[0])

    def path(self, r: int) -> SampledPath:
        return SampledPath(self.grid, self.values[r])


def pair_lags(n_steps: int, max_all_pairs: int = MAX_ALL_PAIRS) -> Tuple[np.ndarray, str]:
    """Lags visited by the pairwise sups and the name of the strategy."""
    if n_steps <= max_all_pairs:
        return np.arange(1, n_steps + 1), "all"
    lags = 2 ** np.arange(int(np.log2(n_steps)) + 1)
    logger.info(f"Grid of {n_steps} steps: restricting pair sups to power-of-two lags")
    return lags, "dyadic"


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"Holder exponent must lie in (0, 1], got {gamma}")


def _flatten_state(values: np.ndarray, lead: int) -> np.ndarray:
    """Collapse all axes after the leading ones and time into one state axis."""
    values = np.asarray(values, dtype=float)
    shape = values.shape[: lead + 1]
    return values.reshape(shape + (-1,))


def _pairwise_sup(
    values: np.ndarray,
    dt: float,
    exponent: float,
    mu: Optional[np.ndarray] = None,
    lags: Optional[np.ndarray] = None,
    moment: Optional[float] = None,
) -> np.ndarray:
    """
    sup over pairs s < t of |x_t - S_{t-s} x_s| / (t - s)^exponent.

    values has shape (..., n + 1, d) and S_tau multiplies entry i by exp(-mu_i tau)
    (no transport without mu). With moment p the norm is replaced by
    (mean over axis 0 of |.|^p)^(1/p) before the sup.
    """
    n_steps = values.shape[-2] - 1
    if lags is None:
        lags, _ = pair_lags(n_steps)
    best_shape = values.shape[:-2] if moment is None else values.shape[1:-2]
    best = np.zeros(best_shape)
    for lag in lags:
        if lag > n_steps:
            continue
        tau = lag * dt
        earlier = values[..., :-lag, :]
        if mu is not None:
            earlier = np.exp(-mu * tau) * earlier
        norms = np.linalg.norm(values[..., lag:, :] - earlier, axis=-1)
        if moment is not None:
            norms = np.mean(norms ** moment, axis=0) ** (1.0 / moment)
        best = np.maximum(best, norms.max(axis=-1) / tau ** exponent)
    return best


def _mild_layout(
    gen: DiagonalGenerator, values: np.ndarray, operator: Optional[bool] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flatten states (..., n + 1, n_modes) or operators (..., n + 1, n_modes, m_modes).

    Returns the values with one trailing axis and the eigenvalue of every
    entry of that axis; operator norms become Hilbert-Schmidt norms. With
    operator=None a trailing axis of length n_modes marks states.
    """
    values = np.asarray(values, dtype=float)
    if not operator and values.shape[-1] == gen.n_modes:
        return values, gen.mu
    if values.ndim >= 3 and values.shape[-2] == gen.n_modes:
        columns = values.shape[-1]
        flat = np.swapaxes(values, -1, -2).reshape(values.shape[:-2] + (columns * gen.n_modes,))
        return flat, np.tile(gen.mu, columns)
    raise ValueError(f"Paths have {values.shape[-1]} modes but the generator has {gen.n_modes}")


def mild_holder_norms(
    gen: DiagonalGenerator, values: np.ndarray, dt: float, gamma: float, operator: Optional[bool] = None
) -> np.ndarray:
    """
    Mild Holder seminorm of a batch of paths.

    Args:
        gen: Generator of the transporting semigroup
        values: Paths of shape (..., n_steps + 1, n_modes), or operator paths
            (..., n_steps + 1, n_modes, m_modes) measured in the Hilbert-Schmidt norm
        dt: Grid step
        gamma: Exponent in (0, 1]
        operator: True for operator paths whose m_modes equals n_modes

    Returns:
        One seminorm per leading index
    """
    _check_gamma(gamma)
    flat, mu = _mild_layout(gen, values, operator)
    return _pairwise_sup(flat, dt, gamma, mu)


def mild_holder_norm(gen: DiagonalGenerator, path: SampledPath, gamma: float) -> float:
    """max over grid pairs of |x_t - S_{t-s} x_s| / (t - s)^gamma."""
    if len(path.grid) < 2:
        raise ValueError("Path needs at least two points")
    return float(mild_holder_norms(gen, path.values, path.grid.dt, gamma))


def mild_holder_distance(gen: DiagonalGenerator, x: SampledPath, y: SampledPath, gamma: float) -> float:
    return mild_holder_norm(gen, x - y, gamma)


def holder_norms(values: np.ndarray, dt: float, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    values = np.asarray(values, dtype=float)
    return _pairwise_sup(values, dt, gamma)


def holder_norm(path: SampledPath, gamma: float) -> float:
    """Classical seminorm max |x_t - x_s| / (t - s)^gamma over grid pairs."""
    return float(holder_norms(path.values, path.grid.dt, gamma))


def sup_norm(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.linalg.norm(values.reshape(values.shape[0], -1), axis=-1)))


def neg_holder_norms(values: np.ndarray, dt: float, delta: float, stride: int = 1) -> np.ndarray:
    """
    Negative Holder norm of a batch of integrands.

    Args:
        values: Integrands of shape (replicas, n_steps + 1, ...); vector or
            operator values are measured in the Euclidean (Hilbert-Schmidt) norm
        dt: Grid step
        delta: Exponent in (0, 1)
        stride: Primitives are taken on the full grid, the sup runs over pairs
            of every stride-th node

    Returns:
        sup over pairs of (t - s)^(delta - 1) |int_s^t G(r) dr| per replica
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"Negative Holder exponent must lie in (0, 1), got {delta}")
    values = _flatten_state(values, 1)
    n_steps = values.shape[1] - 1
    if stride < 1 or n_steps % stride:
        raise ValueError(f"Stride {stride} does not divide the {n_steps} grid steps")
    primitive = integrate.cumulative_trapezoid(values, dx=dt, axis=1, initial=0.0)
    return _pairwise_sup(primitive[:, ::stride], dt * stride, 1.0 - delta)


def neg_holder_norm(path_of_g: SampledPath, delta: float) -> float:
    """sup over grid pairs of (t - s)^(delta - 1) |int_s^t G(r) dr| with trapezoid primitives."""
    return float(neg_holder_norms(path_of_g.values[None], path_of_g.grid.dt, delta)[0])


def b_alpha_p_norm(gen: DiagonalGenerator, ens: Ensemble, alpha: float, p: float) -> float:
    """
    L^p(Omega) mild Holder norm of an ensemble.

    Args:
        gen: Generator of the transporting semigroup
        ens: Replicas on a common grid
        alpha: Exponent in (0, 1]
        p: Moment, at least 1

    Returns:
        sup over pairs of (mean_r |x_t - S_{t-s} x_s|^p)^(1/p) / (t - s)^alpha
    """
    _check_gamma(alpha)
    if p < 1:
        raise ValueError(f"Moment p must be at least 1, got {p}")
    if ens.replicas == 0:
        raise ValueError("Ensemble has no replicas")
    flat, mu = _mild_layout(gen, ens.values)
    return float(_pairwise_sup(flat, ens.grid.dt, alpha, mu, moment=p))


def increment_relation_gap(gen: DiagonalGenerator, path: SampledPath) -> float:
    """
    max over pairs of |df_{s,t}| - |d^f_{s,t}| - |(id - S_{t-s}) f_s|.

    Non-positive up to round-off for any path.
    """
    values = path.values
    n_steps = values.shape[0] - 1
    worst = -np.inf
    for lag in range(1, n_steps + 1):
        transported = np.exp(-gen.mu * lag * path.grid.dt) * values[:-lag]
        plain = np.linalg.norm(values[lag:] - values[:-lag], axis=-1)
        mild = np.linalg.norm(values[lag:] - transported, axis=-1)
        defect = np.linalg.norm(values[:-lag] - transported, axis=-1)
        worst = max(worst, float(np.max(plain - mild - defect)))
    return worst


def norm_report_row(
    norm_kind: str, exponent: float, value: float, n_grid: int, n_replicas: int = 1, p: Optional[float] = None
) -> Dict[str, Any]:
    """One row of a norm report; p is NaN for single-path norms."""
    if norm_kind not in NORM_KINDS:
        raise ValueError(f"Unknown norm kind {norm_kind!r}; expected one of {NORM_KINDS}")
    row = (norm_kind, float(exponent), np.nan if p is None else float(p), float(value), int(n_grid), int(n_replicas))
    return dict(zip(NORM_REPORT_COLUMNS, row))


def fit_rate(xs: Sequence[float], ys: Sequence[float]) -> RateFit:
    """
    Ordinary least squares on (log x, log y).

    Args:
        xs: Positive abscissae
        ys: Positive values

    Returns:
        RateFit with slope, intercept and R^2 (1 for an exactly constant log y)
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have the same length")
    if xs.size < 3:
        raise ValueError(f"Rate fit needs at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("Rate fit needs positive finite data")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0:
        raise ValueError("Rate fit needs at least two distinct abscissae")
    result = stats.linregress(lx, ly)
    residual = ly - (result.intercept + result.slope * lx)
    total = np.sum((ly - ly.mean()) ** 2)
    r_squared = 1.0 if total == 0 else float(max(0.0, 1.0 - np.sum(residual ** 2) / total))
    return RateFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=r_squared,
        points=int(xs.size),
        stderr=float(result.stderr),
    )


def estimate_holder_exponent(paths: np.ndarray, dt: float, lags: Optional[Sequence[int]] = None) -> RateFit:
    """
    Fit E|beta_{s+l} - beta_s|^2 against the lag l.

    For fBm the slope estimates 2H.

    Args:
        paths: Replicas of scalar paths, shape (replicas, n_steps + 1)
        dt: Grid step
        lags: Lags in steps (default: powers of two up to a quarter of the grid)
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 1:
        paths = paths[None]
    n_steps = paths.shape[1] - 1
    if lags is None:
        lags = 2 ** np.arange(max(3, int(np.log2(max(n_steps // 4, 1))) + 1))
        lags = [int(l) for l in lags if l <= max(n_steps // 4, 1)]
    lags = np.asarray(lags, dtype=int)
    moments = [np.mean((paths[:, l:] - paths[:, :-l]) ** 2) for l in lags]
    return fit_rate(lags * dt, moments)
