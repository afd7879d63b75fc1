"""
Fractional Brownian Motion Module

Exact sampling of scalar fBm and of trace-class Q-fBm on uniform grids, and
the Mandelbrot-van Ness moving-average representation used to split an
increment beta_{t+h} - beta_t into a part measurable at time t (smooth in h)
and a part built from the noise after t (rough in h).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, special

from utils import SeedLike, child_seed, make_rng

logger = logging.getLogger(__name__)

# Relative size of a negative circulant eigenvalue that is still treated as round-off.
CIRCULANT_TOLERANCE = 1e-10


def _check_hurst(H: float) -> None:
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {H}")


@dataclass(frozen=True)
class UniformGrid:
    """Time grid t_k = k * dt, k = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"Grid step must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"Grid needs at least one step, got {self.n_steps}")

    @classmethod
    def over(cls, horizon: float, n_steps: int) -> "UniformGrid":
        return cls(dt=horizon / n_steps, n_steps=int(n_steps))

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def __len__(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Index of the grid node at time t; t must sit on the grid."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"Time {t} is not a node of the grid (dt={self.dt}, n={self.n_steps})")
        return k

    def coarsen(self, stride: int) -> "UniformGrid":
        if stride < 1 or self.n_steps % stride:
            raise ValueError(f"Stride {stride} does not divide {self.n_steps} steps")
        return UniformGrid(dt=self.dt * stride, n_steps=self.n_steps // stride)


@dataclass(frozen=True, eq=False)
class ScalarPath:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != len(self.grid):
            raise ValueError(
                f"Path has {values.shape[0]} values for a grid of {len(self.grid)} points"
            )
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True, eq=False)
class QSpec:
    """Eigenvalues lambda_n of the covariance Q, descending and summable."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        if lam.size == 0:
            raise ValueError("Q needs at least one eigenvalue")
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("Eigenvalues of Q must be positive and finite")
        if np.any(np.diff(lam) > 0):
            raise ValueError("Eigenvalues of Q must be sorted descending")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def m_modes(self) -> int:
        return int(self.lam.size)

    @property
    def trace(self) -> float:
        return float(np.sum(self.lam))

    @property
    def sqrt_lam(self) -> np.ndarray:
        return np.sqrt(self.lam)

    @classmethod
    def power_law(cls, m_modes: int, q_exponent: float = 1.5) -> "QSpec":
        """lambda_n = (n + 1)^(-q); trace class for q > 1."""
        if m_modes < 1:
            raise ValueError(f"m_modes must be positive, got {m_modes}")
        if q_exponent <= 1:
            logger.warning(f"q_exponent={q_exponent} is not trace class in the infinite-mode limit")
        return cls((np.arange(m_modes, dtype=float) + 1.0) ** (-q_exponent))

    @classmethod
    def from_config(cls, block: Dict[str, Any]) -> "QSpec":
        if "lambda" in block:
            return cls(np.asarray(block["lambda"], dtype=float))
        return cls.power_law(int(block["m_modes"]), float(block.get("q_exponent", 1.5)))

    def to_config(self) -> Dict[str, Any]:
        return {"lambda": self.lam.tolist()}


@dataclass(frozen=True, eq=False)
class QfbmPath:
    """
    Sampled trace-class fBm B_t = sum_n sqrt(lambda_n) beta^n_t e_n.

    values has shape (n_steps + 1, m_modes), or (n_steps + 1, replicas, m_modes)
    for an ensemble of independent drivers.
    """

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != len(self.grid):
            raise ValueError(
                f"Path has {values.shape[0]} values for a grid of {len(self.grid)} points"
            )
        if np.any(values[0] != 0):
            raise ValueError("Q-fBm paths must start at 0")
        object.__setattr__(self, "values", values)

    @property
    def m_modes(self) -> int:
        return int(self.values.shape[-1])

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def scaled(self, factor: float) -> "QfbmPath":
        return QfbmPath(self.grid, factor * self.values)

    def replica(self, r: int) -> "QfbmPath":
        if self.values.ndim != 3:
            raise ValueError("Path holds a single driver")
        return QfbmPath(self.grid, self.values[:, r, :])


def fbm_covariance(H: float, s: Union[float, np.ndarray], t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """E[beta_s beta_t] = (t^2H + s^2H - |t - s|^2H) / 2."""
    _check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("fBm covariance needs non-negative times")
    cov = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(cov) if cov.ndim == 0 else cov


def fgn_autocovariance(H: float, n: int) -> np.ndarray:
    """Autocovariance gamma(k), k = 0..n-1, of unit-step fractional Gaussian noise."""
    _check_hurst(H)
    k = np.arange(n, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=64)
def _circulant_eigenvalues(H: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(H, n + 1)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    eig.setflags(write=False)
    return eig


def circulant_embedding_is_valid(H: float, n: int) -> bool:
    eig = _circulant_eigenvalues(float(H), int(n))
    return bool(eig.min() >= -CIRCULANT_TOLERANCE * eig.max())


@lru_cache(maxsize=16)
def _cholesky_factor(H: float, n: int) -> np.ndarray:
    factor = linalg.cholesky(linalg.toeplitz(fgn_autocovariance(H, n)), lower=True)
    factor.setflags(write=False)
    return factor


def _sample_cholesky(H: float, n: int, rng: np.random.Generator, replicas: int) -> np.ndarray:
    z = rng.standard_normal((replicas, n))
    return z @ _cholesky_factor(float(H), int(n)).T


def _sample_circulant(eig: np.ndarray, n: int, rng: np.random.Generator, replicas: int) -> np.ndarray:
    size = eig.size
    z = rng.standard_normal((replicas, 2, size))
    weights = np.sqrt(np.clip(eig, 0.0, None) / size)
    y = np.fft.fft(weights * (z[:, 0] + 1j * z[:, 1]), axis=-1)
    return y.real[:, :n]


def sample_fgn(
    H: float,
    n: int,
    dt: float,
    seed: SeedLike,
    replicas: Optional[int] = None,
    method: str = "circulant",
) -> np.ndarray:
    """
    Sample n stationary fractional Gaussian noise increments of step dt.

    Args:
        H: Hurst parameter in (0, 1)
        n: Number of increments
        dt: Grid step
        seed: Integer seed or derived SeedSequence
        replicas: Number of independent sequences; None returns a single 1-D sequence
        method: "circulant" (Davies-Harte, default) or "cholesky" (exact oracle)

    Returns:
        Array of shape (n,) or (replicas, n)
    """
    _check_hurst(H)
    if n < 1:
        raise ValueError(f"Need at least one increment, got n={n}")
    if not dt > 0:
        raise ValueError(f"Step must be positive, got dt={dt}")
    rng = make_rng(seed)
    count = 1 if replicas is None else int(replicas)

    if method == "cholesky":
        increments = _sample_cholesky(H, n, rng, count)
    elif method == "circulant":
        eig = _circulant_eigenvalues(float(H), int(n))
        if eig.min() < -CIRCULANT_TOLERANCE * eig.max():
            logger.warning(
                f"Circulant embedding for H={H}, n={n} has eigenvalue {eig.min():.3e}; "
                f"falling back to the Cholesky sampler"
            )
            increments = _sample_cholesky(H, n, rng, count)
        else:
            increments = _sample_circulant(eig, n, rng, count)
    else:
        raise ValueError(f"Unknown fGn sampling method: {method}")

    increments = increments * dt ** H
    return increments[0] if replicas is None else increments


def fbm_path(H: float, grid: UniformGrid, seed: SeedLike, method: str = "circulant") -> ScalarPath:
    increments = sample_fgn(H, grid.n_steps, grid.dt, seed, method=method)
    return ScalarPath(grid, np.concatenate([[0.0], np.cumsum(increments)]))


def sample_fbm_paths(
    H: float, grid: UniformGrid, seed: SeedLike, replicas: int, method: str = "circulant"
) -> np.ndarray:
    """Independent fBm paths as an array of shape (replicas, n_steps + 1)."""
    increments = sample_fgn(H, grid.n_steps, grid.dt, seed, replicas=replicas, method=method)
    paths = np.zeros((replicas, grid.n_steps + 1))
    np.cumsum(increments, axis=1, out=paths[:, 1:])
    return paths


def sample_qfbm(
    q: QSpec,
    H: float,
    grid: UniformGrid,
    seed: SeedLike,
    replicas: Optional[int] = None,
    method: str = "circulant",
) -> QfbmPath:
    """
    Sample a trace-class Q-fBm on a grid.

    Mode n is driven by the stream child_seed(seed, n), so raising m_modes keeps
    the lower modes unchanged.

    Args:
        q: Covariance eigenvalues
        H: Hurst parameter
        grid: Uniform time grid
        seed: Master seed of this driver
        replicas: Optional number of independent drivers

    Returns:
        QfbmPath with values (n+1, m) or (n+1, replicas, m)
    """
    shape = (len(grid),) + (() if replicas is None else (int(replicas),)) + (q.m_modes,)
    values = np.zeros(shape)
    for n, scale in enumerate(q.sqrt_lam):
        increments = sample_fgn(H, grid.n_steps, grid.dt, child_seed(seed, n), replicas, method)
        values[1:, ..., n] = scale * np.cumsum(increments, axis=-1).T
    return QfbmPath(grid, values)


# ---------------------------------------------------------------------------
# Mandelbrot-van Ness representation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=128)
def mvn_normalization(H: float) -> float:
    """
    Constant alpha_H making alpha_H * int ((t-u)_+^(H-1/2) - (-u)_+^(H-1/2)) dW_u unit-variance at t=1.

    Computed by quadrature of the kernel's squared norm.
    """
    _check_hurst(H)
    beta = H - 0.5
    if beta == 0:
        return 1.0
    past, _ = integrate.quad(lambda d: ((1.0 + d) ** beta - d ** beta) ** 2, 0.0, 1.0, limit=200)
    tail, _ = integrate.quad(lambda d: ((1.0 + d) ** beta - d ** beta) ** 2, 1.0, np.inf, limit=200)
    present = 1.0 / (2 * H)
    return float(1.0 / np.sqrt(past + tail + present))


def mvn_normalization_closed_form(H: float) -> float:
    _check_hurst(H)
    return float(np.sqrt(special.gamma(2 * H + 1) * np.sin(np.pi * H)) / special.gamma(H + 0.5))


def _smooth_variance_slice(H: float, h: float, lo: float, hi: float) -> float:
    beta = H - 0.5
    value, _ = integrate.quad(lambda d: ((h + d) ** beta - d ** beta) ** 2, lo, hi, limit=200)
    return value


def resolve_history_horizon(
    H: float,
    t: float,
    h_max: float,
    tol: float = 1e-3,
    max_doublings: int = 48,
) -> float:
    """
    Truncation length of the noise history for the smooth part.

    Starts from 50 * (t + h_max) and doubles while doubling still changes the
    variance of the smooth part at h_max by more than tol (relative).
    """
    _check_hurst(H)
    if h_max <= 0:
        raise ValueError(f"h_max must be positive, got {h_max}")
    horizon = 50.0 * (t + h_max)
    if H == 0.5:
        return horizon
    variance = _smooth_variance_slice(H, h_max, 0.0, min(h_max, horizon))
    if horizon > h_max:
        variance += _smooth_variance_slice(H, h_max, h_max, horizon)
    for _ in range(max_doublings):
        extra = _smooth_variance_slice(H, h_max, horizon, 2 * horizon)
        if extra <= tol * (variance + extra):
            return horizon
        variance += extra
        horizon *= 2
    logger.warning(
        f"History horizon for H={H} did not settle within {max_doublings} doublings; using {horizon:.3e}"
    )
    return horizon


@dataclass(frozen=True, eq=False)
class NoiseHistory:
    """
    Two-sided white noise sampled as increments over the cells of a graded grid.

    nodes are ascending times from -T_hist up to the last future time;
    increments[j] = W(nodes[j+1]) - W(nodes[j]) with trailing batch axes
    (noise modes, replicas, ...).
    """

    nodes: np.ndarray
    increments: np.ndarray
    base_time: float
    seed: Optional[int] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        increments = np.asarray(self.increments, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise ValueError("History nodes must be strictly increasing")
        if increments.shape[0] != nodes.size - 1:
            raise ValueError("One increment per history cell is required")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "increments", increments)

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return tuple(self.increments.shape[1:])

    @property
    def start(self) -> float:
        return float(self.nodes[0])

    @property
    def end(self) -> float:
        return float(self.nodes[-1])

    def node_index(self, u: float) -> int:
        k = int(np.searchsorted(self.nodes, u))
        for j in (k - 1, k):
            if 0 <= j < self.nodes.size and abs(self.nodes[j] - u) <= 1e-9 * max(1.0, abs(u)):
                return j
        raise ValueError(f"Time {u} is not a node of the noise history")

    def combine(self, weights: np.ndarray) -> np.ndarray:
        """sum_j weights[..., j] * increments[j]."""
        return np.tensordot(weights, self.increments, axes=([-1], [0]))


def history_nodes(
    base_time: float,
    history_horizon: float,
    future_times: Sequence[float] = (),
    finest: float = 1e-4,
    per_decade: int = 64,
) -> np.ndarray:
    """Geometric grid refined toward base_time in the past, plus the given future times."""
    if finest <= 0 or finest >= history_horizon:
        raise ValueError(f"Finest history cell {finest} must lie in (0, {history_horizon})")
    decades = np.log10(history_horizon / finest)
    distances = np.geomspace(finest, history_horizon, int(np.ceil(decades * per_decade)) + 1)
    past = base_time - distances[::-1]
    future = np.asarray([u for u in future_times if u > base_time], dtype=float)
    nodes = np.unique(np.concatenate([past, [base_time], future]))
    # merge round-off duplicates such as t + k*dt vs t + h_k
    keep = np.concatenate([[True], np.diff(nodes) > 1e-12 * np.maximum(1.0, np.abs(nodes[1:]))])
    return nodes[keep]


def build_noise_history(
    H: float,
    base_time: float,
    h_grid: Sequence[float],
    seed: SeedLike,
    batch_shape: Tuple[int, ...] = (),
    future_step: Optional[float] = None,
    history_horizon: Optional[float] = None,
    per_decade: int = 64,
) -> NoiseHistory:
    """
    Sample the white noise needed to decompose increments at base_time.

    Args:
        H: Hurst parameter, fixes the truncation length
        base_time: Time t of the decomposition
        h_grid: Positive offsets h; every t + h becomes a node
        seed: Seed of the white noise
        batch_shape: Trailing shape (noise modes, replicas) of independent copies
        future_step: Optional uniform spacing of extra nodes in (t, t + max h]
        history_horizon: Override for the truncation length

    Returns:
        NoiseHistory over [t - T_hist, t + max h]
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.size == 0 or np.any(h_grid <= 0):
        raise ValueError("Offsets h must be positive")
    h_max = float(h_grid.max())
    if history_horizon is None:
        history_horizon = resolve_history_horizon(H, base_time, h_max)
    future = list(base_time + h_grid)
    if future_step is not None:
        steps = int(np.ceil(h_max / future_step - 1e-9))
        future.extend(base_time + future_step * np.arange(1, steps + 1))
    finest = min(float(h_grid.min()), future_step or np.inf) / 16.0
    nodes = history_nodes(base_time, history_horizon, future, finest=finest, per_decade=per_decade)
    rng = make_rng(seed)
    widths = np.diff(nodes).reshape((-1,) + (1,) * len(batch_shape))
    increments = rng.standard_normal((nodes.size - 1,) + tuple(batch_shape)) * np.sqrt(widths)
    logger.debug(f"Noise history: {nodes.size} nodes, horizon {history_horizon:.3e}, batch {batch_shape}")
    return NoiseHistory(nodes, increments, float(base_time), seed if isinstance(seed, int) else None)


def _cell_average_power(anchor: float, lo: np.ndarray, hi: np.ndarray, exponent: float) -> np.ndarray:
    """Mean of (anchor - u)^exponent over each cell [lo, hi], anchor >= hi."""
    a = anchor - lo
    b = anchor - hi
    e1 = exponent + 1.0
    if e1 == 0:
        return np.log(a / b) / (hi - lo)
    with np.errstate(divide="ignore"):
        return (a ** e1 - b ** e1) / (e1 * (hi - lo))


def kernel_weights(history: NoiseHistory, H: float, t: float, h: float, part: str) -> np.ndarray:
    """
    Cell weights w with int K(u) dW_u ~ sum_j w_j dW_j for one of the kernels.

    part is "smooth", "rough", "full" (their sum), "d1" or "d2" (h-derivatives
    of the smooth kernel).
    """
    _check_hurst(H)
    if not h > 0:
        raise ValueError(f"Offset h must be positive, got {h}")
    alpha = mvn_normalization(H)
    beta = H - 0.5
    lo, hi = history.nodes[:-1], history.nodes[1:]
    if history.start >= t:
        raise ValueError("Noise history does not reach into the past of t")
    history.node_index(t)
    weights = np.zeros(lo.size)
    past = hi <= t + 1e-12 * max(1.0, abs(t))

    if part in ("smooth", "full"):
        if beta != 0:
            weights[past] = alpha * (
                _cell_average_power(t + h, lo[past], hi[past], beta)
                - _cell_average_power(t, lo[past], hi[past], beta)
            )
    if part in ("rough", "full"):
        end = history.node_index(t + h)
        start = history.node_index(t)
        window = slice(start, end)
        weights[window] = alpha * _cell_average_power(t + h, lo[window], hi[window], beta)
    if part == "d1":
        if beta != 0:
            weights[past] = alpha * beta * _cell_average_power(t + h, lo[past], hi[past], beta - 1.0)
    elif part == "d2":
        if beta != 0:
            weights[past] = (
                alpha * beta * (beta - 1.0) * _cell_average_power(t + h, lo[past], hi[past], beta - 2.0)
            )
    elif part not in ("smooth", "rough", "full"):
        raise ValueError(f"Unknown kernel part: {part}")
    return weights


def kernel_variance(history: NoiseHistory, weights: np.ndarray) -> float:
    """Variance sum_j w_j^2 |cell_j| of the quadrature functional."""
    return float(np.sum(weights ** 2 * np.diff(history.nodes)))


@dataclass(frozen=True, eq=False)
class IncrementDecomposition:
    """
    beta_{t+h} - beta_t = smooth_h + rough_h for each offset h.

    smooth and rough have shape (len(h), *batch_shape).
    """

    h: np.ndarray
    smooth: np.ndarray
    rough: np.ndarray
    base_time: float

    @property
    def total(self) -> np.ndarray:
        return self.smooth + self.rough


def decompose_increment(
    history: NoiseHistory, H: float, t: float, h_grid: Sequence[float]
) -> IncrementDecomposition:
    """
    Split beta_{t+h} - beta_t into its smooth and rough parts.

    Args:
        history: White noise covering [t - T_hist, t + max h]
        H: Hurst parameter
        t: Base time (a history node)
        h_grid: Positive offsets (t + h must be history nodes)

    Returns:
        IncrementDecomposition with one row per offset
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if np.any(h_grid <= 0):
        raise ValueError("Smooth part is defined for h > 0 only")
    if t + h_grid.max() > history.end + 1e-12:
        raise ValueError(f"Noise history ends at {history.end}, before t + h = {t + h_grid.max()}")
    smooth_w = np.stack([kernel_weights(history, H, t, h, "smooth") for h in h_grid])
    rough_w = np.stack([kernel_weights(history, H, t, h, "rough") for h in h_grid])
    return IncrementDecomposition(
        h=h_grid,
        smooth=history.combine(smooth_w),
        rough=history.combine(rough_w),
        base_time=float(t),
    )


def smooth_part_derivative(
    history: NoiseHistory, H: float, t: float, h_grid: Sequence[float], order: int = 1
) -> np.ndarray:
    """
    h-derivatives of the smooth part, evaluated for each offset.

    Only the noise before t enters, so offsets need not be history nodes.

    Returns:
        Array of shape (len(h_grid), *batch_shape)
    """
    if order not in (1, 2):
        raise ValueError(f"Derivative order must be 1 or 2, got {order}")
    h_grid = np.asarray(h_grid, dtype=float)
    if np.any(h_grid <= 0):
        raise ValueError("Smooth part derivatives need h > 0")
    part = "d1" if order == 1 else "d2"
    weights = np.stack([kernel_weights(history, H, t, h, part) for h in h_grid])
    return history.combine(weights)


def smooth_part(history: NoiseHistory, H: float, t: float, h_grid: Sequence[float]) -> np.ndarray:
    """Smooth part alone; like smooth_part_derivative it needs no future nodes."""
    h_grid = np.asarray(h_grid, dtype=float)
    if np.any(h_grid <= 0):
        raise ValueError("Smooth part is defined for h > 0 only")
    weights = np.stack([kernel_weights(history, H, t, h, "smooth") for h in h_grid])
    return history.combine(weights)


def mvn_increment(history: NoiseHistory, H: float, t: float, h: float) -> np.ndarray:
    """beta_{t+h} - beta_t from the full moving-average kernel."""
    return history.combine(kernel_weights(history, H, t, h, "full"))
