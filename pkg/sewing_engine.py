"""
Sewing Engine Module

Semigroup-weighted Riemann limits of two-parameter germs along dyadic
partitions, with the Cauchy difference of every refinement recorded, and the
germs behind the Young, mild Young and mixed Wiener-Young integrals.

A germ is evaluated on pairs of grid indices (u, v), vectorised: one call
returns the values for a whole partition.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from fbm import NoiseHistory, QfbmPath, QSpec, ScalarPath, UniformGrid, decompose_increment, smooth_part
from holder_metrics import SampledPath
from spectral_core import DiagonalGenerator

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 12

GermEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TwoParamField:
    """
    Germ (u, v) -> Xi_{u,v} on pairs of nodes of a uniform grid.

    evaluate receives equally long index arrays u <= v and returns an array of
    shape (len(u),) + value_shape whose last axis indexes state modes.
    """

    grid: UniformGrid
    evaluate: GermEvaluator
    value_shape: Tuple[int, ...]
    name: str = "germ"

    def __call__(self, s: float, t: float) -> np.ndarray:
        u = np.array([self.grid.index_of(s)])
        v = np.array([self.grid.index_of(t)])
        return self.evaluate(u, v)[0]

    def diagonal_defect(self) -> float:
        """max |Xi_{s,s}| over the grid; zero for a valid germ."""
        idx = np.arange(len(self.grid))
        return float(np.max(np.abs(self.evaluate(idx, idx))))


@dataclass(frozen=True, eq=False)
class SewingResult:
    value: np.ndarray
    level_diffs: np.ndarray
    levels: int
    value_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if len(self.level_diffs) != self.levels:
            raise ValueError("One Cauchy difference per dyadic level is required")

    @property
    def error_proxy(self) -> float:
        return float(self.level_diffs[-1]) if self.levels else 0.0


@dataclass(frozen=True, eq=False)
class FactoredOperatorPath:
    """
    Operator path g(t) = sum_j vectors[t, j] (x) weights[j] stored in factored form.

    vectors has shape (n_steps + 1, rank, n_modes), weights (rank, m_modes).
    """

    grid: UniformGrid
    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if vectors.ndim == 2:
            vectors = vectors[:, None, :]
        if vectors.shape[0] != len(self.grid) or vectors.shape[1] != weights.shape[0]:
            raise ValueError("Factored operator path has inconsistent shapes")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)

    def apply(self, idx: np.ndarray, dh: np.ndarray) -> np.ndarray:
        """g(t_idx) applied to noise increments dh of shape (k, ..., m_modes)."""
        coeffs = np.einsum("jm,k...m->k...j", self.weights, dh)
        return np.einsum("kjn,k...j->k...n", self.vectors[idx], coeffs)

    def to_dense(self) -> np.ndarray:
        return np.einsum("tjn,jm->tnm", self.vectors, self.weights)


OperatorPath = Union[SampledPath, FactoredOperatorPath]
Driver = Union[QfbmPath, ScalarPath, np.ndarray]


def _transport(gen: Optional[DiagonalGenerator], tau: np.ndarray, values: np.ndarray) -> np.ndarray:
    """S_tau applied to values of shape (k, ..., n_modes), one tau per leading index."""
    if gen is None:
        return values
    factors = gen.semigroup_factors(tau)
    extra = values.ndim - 2
    return factors.reshape((factors.shape[0],) + (1,) * extra + (factors.shape[1],)) * values


def _check_triple(r: float, s: float, t: float) -> None:
    if not r <= s <= t:
        raise ValueError(f"Sewing needs r <= s <= t, got ({r}, {s}, {t})")


def sewing_defect(gen: Optional[DiagonalGenerator], xi: TwoParamField, r: float, s: float, t: float) -> np.ndarray:
    """Xi_{r,t} - Xi_{s,t} - S_{t-s} Xi_{r,s}."""
    _check_triple(r, s, t)
    transported = _transport(gen, np.array([t - s]), xi(r, s)[None])[0]
    return xi(r, t) - xi(s, t) - transported


def _dyadic_indices(xi: TwoParamField, s: float, t: float, levels: int) -> Tuple[int, int, int]:
    i, j = xi.grid.index_of(s), xi.grid.index_of(t)
    if levels < 1:
        raise ValueError(f"Need at least one dyadic level, got {levels}")
    span = j - i
    if span % (2 ** levels):
        raise ValueError(
            f"Grid too coarse: [{s}, {t}] holds {span} steps, not a multiple of 2^{levels}"
        )
    return i, j, span // 2 ** levels


def riemann_sum(gen: Optional[DiagonalGenerator], xi: TwoParamField, partition: Sequence[int]) -> np.ndarray:
    """
    sum over [u, v] of the partition of S_{t-v} Xi_{u,v}, t the last node.

    Args:
        gen: Generator, None for the plain (Young) sum
        xi: Germ
        partition: Increasing grid indices, any spacing

    Returns:
        The Riemann sum
    """
    idx = np.asarray(partition, dtype=int)
    if idx.size < 2 or np.any(np.diff(idx) <= 0):
        raise ValueError("Partition must hold at least two increasing indices")
    values = xi.evaluate(idx[:-1], idx[1:])
    tau = (idx[-1] - idx[1:]) * xi.grid.dt
    return np.sum(_transport(gen, tau, values), axis=0)


def _level_sums(gen: Optional[DiagonalGenerator], xi: TwoParamField, s: float, t: float, levels: int) -> np.ndarray:
    i, j, stride = _dyadic_indices(xi, s, t, levels)
    sums = []
    for level in range(levels + 1):
        step = (j - i) // 2 ** level
        sums.append(riemann_sum(gen, xi, np.arange(i, j + 1, step)))
    return np.stack(sums)


def sew(gen: Optional[DiagonalGenerator], xi: TwoParamField, s: float, t: float, levels: int = DEFAULT_LEVELS) -> SewingResult:
    """
    Sew a germ over [s, t] along dyadic partitions.

    Level n holds the Riemann sum over 2^n intervals, so each refinement
    subtracts sum S_{t-w} d^Xi_{u,mid,w} from the previous sum.

    Args:
        gen: Generator, None for S = id
        xi: Germ on the grid
        s: Start time (grid node)
        t: End time (grid node)
        levels: Number of refinements

    Returns:
        SewingResult with the finest sum and |sum_{n+1} - sum_n| per level
    """
    if s == t:
        if levels < 1:
            raise ValueError(f"Need at least one dyadic level, got {levels}")
        zero = np.zeros(xi.value_shape)
        return SewingResult(zero, np.zeros(levels), levels, np.zeros(levels + 1))
    sums = _level_sums(gen, xi, s, t, levels)
    flat = sums.reshape(levels + 1, -1)
    diffs = np.linalg.norm(np.diff(flat, axis=0), axis=-1)
    return SewingResult(sums[-1], diffs, levels, np.linalg.norm(flat, axis=-1))


def ensemble_sewing(
    gen: Optional[DiagonalGenerator], xi: TwoParamField, s: float, t: float, levels: int, p: float = 2.0
) -> SewingResult:
    """
    Sew an ensemble germ whose first value axis indexes replicas.

    Returns:
        SewingResult with the finest sums per replica; level_diffs and
        value_norms hold L^p(Omega) norms of the Cauchy differences and of
        the level sums
    """
    if p < 1:
        raise ValueError(f"Moment p must be at least 1, got {p}")
    sums = _level_sums(gen, xi, s, t, levels)
    replicas = sums.shape[1]
    values = np.linalg.norm(sums.reshape(levels + 1, replicas, -1), axis=-1)
    diffs = np.linalg.norm(np.diff(sums, axis=0).reshape(levels, replicas, -1), axis=-1)

    def lp(norms: np.ndarray) -> np.ndarray:
        return np.mean(norms ** p, axis=1) ** (1.0 / p)

    return SewingResult(sums[-1], lp(diffs), levels, lp(values))


def sew_cumulative(gen: Optional[DiagonalGenerator], xi: TwoParamField) -> np.ndarray:
    """
    Integral from 0 to every grid node at grid resolution.

    Uses I_{k+1} = S_dt I_k + Xi_{t_k, t_{k+1}}.
    """
    n = xi.grid.n_steps
    idx = np.arange(n)
    pieces = xi.evaluate(idx, idx + 1)
    out = np.zeros((n + 1,) + pieces.shape[1:])
    factor = None if gen is None else np.exp(-gen.mu * xi.grid.dt)
    for k in range(n):
        carried = out[k] if factor is None else factor * out[k]
        out[k + 1] = carried + pieces[k]
    return out


# ---------------------------------------------------------------------------
# Germs
# ---------------------------------------------------------------------------

def _driver_values(h: Driver) -> np.ndarray:
    if isinstance(h, (QfbmPath, ScalarPath)):
        return h.values
    return np.asarray(h, dtype=float)


def _contract(f_vals: np.ndarray, dh: np.ndarray, operator: bool) -> np.ndarray:
    """f applied to the driver increments; plain product for scalar drivers."""
    if not operator:
        return f_vals * dh.reshape(dh.shape + (1,) * (f_vals.ndim - dh.ndim))
    return np.einsum("k...ij,k...j->k...i", f_vals, dh)


def _integrand_values(f: Union[OperatorPath, ScalarPath, np.ndarray]) -> np.ndarray:
    if isinstance(f, (SampledPath, ScalarPath)):
        return f.values
    return np.asarray(f, dtype=float)


def _germ_shape(sample: np.ndarray) -> Tuple[int, ...]:
    return tuple(sample.shape[1:])


def _resolve_grid(grid: Optional[UniformGrid], *paths: object) -> UniformGrid:
    if grid is not None:
        return grid
    for path in paths:
        found = getattr(path, "grid", None)
        if isinstance(found, UniformGrid):
            return found
    raise ValueError("A grid is needed for raw array inputs")


def young_germ(f: Union[SampledPath, ScalarPath, np.ndarray], h: Driver, grid: UniformGrid, germ: str = "left") -> TwoParamField:
    """
    Xi_{u,v} = f(u) (h_v - h_u), or the symmetric (f(u) + f(v))/2 (h_v - h_u).

    f holds scalars or vectors per node; h is scalar, or vector when f is
    operator valued with a matching last axis.
    """
    f_vals = _integrand_values(f)
    h_vals = _driver_values(h)
    if f_vals.shape[0] != len(grid) or h_vals.shape[0] != len(grid):
        raise ValueError("Integrand and driver must live on the germ's grid")
    operator = h_vals.ndim > 1 and f_vals.ndim > 2
    if germ not in ("left", "trapezoid"):
        raise ValueError(f"Unknown Young germ: {germ}")

    def evaluate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        dh = h_vals[v] - h_vals[u]
        weight = f_vals[u] if germ == "left" else 0.5 * (f_vals[u] + f_vals[v])
        return _contract(weight, dh, operator)

    shape = _germ_shape(evaluate(np.array([0]), np.array([0])))
    return TwoParamField(grid, evaluate, shape, name=f"young_{germ}")


def mild_young_germ(
    gen: DiagonalGenerator,
    f: Union[OperatorPath, np.ndarray],
    h: Driver,
    grid: UniformGrid,
    germ: str = "left",
) -> TwoParamField:
    """
    Xi_{u,v} = S_{v-u} f(u) h_{u,v}, or the symmetric (S_{v-u} f(u) + f(v)) h_{u,v} / 2.

    f holds operator values (n_modes, m_modes) per node, or vectors when the
    driver is scalar; a FactoredOperatorPath is applied without densifying.
    """
    if germ not in ("left", "trapezoid"):
        raise ValueError(f"Unknown mild Young germ: {germ}")
    h_vals = _driver_values(h)
    if h_vals.shape[0] != len(grid):
        raise ValueError("Driver must live on the germ's grid")

    if isinstance(f, FactoredOperatorPath):
        if f.weights.shape[1] != h_vals.shape[-1]:
            raise ValueError("Operator path and driver disagree on the number of noise modes")
        if f.vectors.shape[-1] != gen.n_modes:
            raise ValueError("Operator path and generator disagree on the number of modes")

        def apply(idx: np.ndarray, dh: np.ndarray) -> np.ndarray:
            return f.apply(idx, dh)
    else:
        f_vals = _integrand_values(f)
        if f_vals.shape[0] != len(grid):
            raise ValueError("Integrand must live on the germ's grid")
        operator = h_vals.ndim > 1
        if operator and f_vals.shape[-1] != h_vals.shape[-1]:
            raise ValueError(
                f"Operator acts on {f_vals.shape[-1]} noise modes, driver has {h_vals.shape[-1]}"
            )
        state_axis = -2 if operator else -1
        if f_vals.shape[state_axis] != gen.n_modes:
            raise ValueError(
                f"Integrand maps into {f_vals.shape[state_axis]} modes, generator has {gen.n_modes}"
            )

        def apply(idx: np.ndarray, dh: np.ndarray) -> np.ndarray:
            return _contract(f_vals[idx], dh, operator)

    def evaluate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        dh = h_vals[v] - h_vals[u]
        left = _transport(gen, (v - u) * grid.dt, apply(u, dh))
        if germ == "left":
            return left
        return 0.5 * (left + apply(v, dh))

    shape = _germ_shape(evaluate(np.array([0]), np.array([0])))
    return TwoParamField(grid, evaluate, shape, name=f"mild_young_{germ}")


def drift_germ(gen: DiagonalGenerator, f_vals: np.ndarray, grid: UniformGrid) -> TwoParamField:
    """Xi_{u,v} = int_u^v S_{v-r} dr f(u), i.e. (1 - exp(-mu (v-u))) / mu * f(u)."""
    f_vals = np.asarray(f_vals, dtype=float)
    if f_vals.shape[0] != len(grid) or f_vals.shape[-1] != gen.n_modes:
        raise ValueError("Drift values must be (n_steps + 1, ..., n_modes) on the germ's grid")

    def evaluate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        tau = (v - u) * grid.dt
        filt = -np.expm1(-np.multiply.outer(tau, gen.mu)) / gen.mu
        extra = f_vals.ndim - 2
        return filt.reshape((filt.shape[0],) + (1,) * extra + (gen.n_modes,)) * f_vals[u]

    return TwoParamField(grid, evaluate, tuple(f_vals.shape[1:]), name="drift")


def additive_germ(gen: Optional[DiagonalGenerator], path: np.ndarray, grid: UniformGrid) -> TwoParamField:
    """Xi_{u,v} = x_v - S_{v-u} x_u; its defect vanishes identically."""
    values = np.asarray(path, dtype=float)

    def evaluate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return values[v] - _transport(gen, (v - u) * grid.dt, values[u])

    return TwoParamField(grid, evaluate, tuple(values.shape[1:]), name="additive")


def young_integral(
    f: Union[SampledPath, ScalarPath, np.ndarray],
    h: Driver,
    s: float,
    t: float,
    levels: int = DEFAULT_LEVELS,
    germ: str = "left",
    grid: Optional[UniformGrid] = None,
) -> SewingResult:
    """
    Young integral of f against h over [s, t] with S = id.

    Args:
        f: Integrand path (scalar or vector per node)
        h: Integrator path
        s: Start time
        t: End time
        levels: Dyadic refinements
        germ: "left" or "trapezoid"; both sew to the same limit
        grid: Grid of raw array inputs (taken from the paths otherwise)

    Returns:
        SewingResult
    """
    grid = _resolve_grid(grid, h, f)
    return sew(None, young_germ(f, h, grid, germ), s, t, levels)


def mild_young_integral(
    gen: DiagonalGenerator,
    f: Union[OperatorPath, np.ndarray],
    h: Driver,
    s: float,
    t: float,
    levels: int = DEFAULT_LEVELS,
    germ: str = "left",
    grid: Optional[UniformGrid] = None,
) -> SewingResult:
    """Sewn integral of S_{t-r} f(r) dh_r over [s, t]."""
    grid = _resolve_grid(grid, h, f)
    return sew(gen, mild_young_germ(gen, f, h, grid, germ), s, t, levels)


def mixed_wiener_young_integral(
    gen: Optional[DiagonalGenerator],
    g: Union[SampledPath, np.ndarray],
    history: NoiseHistory,
    q: QSpec,
    H: float,
    s: float,
    t: float,
    n_gauss: int = 4,
) -> np.ndarray:
    """
    Integral of S_{t-r} g(r) against B on [s, t], split at s into its parts.

    The rough part is the left-point sum against the rough increments; the
    smooth part integrates g against the derivative of the smooth part with
    g linear between nodes, which after integration by parts only needs the
    smooth part itself at Gauss-Legendre points.

    Args:
        gen: Generator, None for S = id
        g: Operator values (K + 1, n_modes, m_modes) on the uniform grid of [s, t]
        history: White noise at base time s with batch shape (..., m_modes)
        q: Covariance eigenvalues of B
        H: Hurst parameter
        s: Start time (the base time of history)
        t: End time
        n_gauss: Gauss-Legendre points per cell for the smooth part

    Returns:
        Integral of shape (..., n_modes)
    """
    g_vals = _integrand_values(g)
    if g_vals.ndim != 3:
        raise ValueError("g must hold operator values (K + 1, n_modes, m_modes)")
    if g_vals.shape[-1] != q.m_modes:
        raise ValueError(f"g acts on {g_vals.shape[-1]} noise modes, Q has {q.m_modes}")
    if not history.batch_shape or history.batch_shape[-1] != q.m_modes:
        raise ValueError("Noise history must carry one white noise per noise mode")
    if abs(history.base_time - s) > 1e-12 * max(1.0, abs(s)):
        raise ValueError(f"Noise history is based at {history.base_time}, not at s={s}")
    if t <= s:
        raise ValueError(f"Need s < t, got ({s}, {t})")
    if history.end < t - 1e-12 * max(1.0, abs(t)):
        raise ValueError(f"Noise history ends at {history.end}, before t={t}")

    cells = g_vals.shape[0] - 1
    dt = (t - s) / cells
    offsets = dt * np.arange(1, cells + 1)
    integrand = g_vals
    if gen is not None:
        integrand = gen.semigroup_factors(t - s - dt * np.arange(cells + 1))[:, :, None] * g_vals
    scale = q.sqrt_lam

    parts = decompose_increment(history, H, s, offsets)
    zero = np.zeros((1,) + parts.rough.shape[1:])
    rough = np.concatenate([zero, parts.rough]) * scale
    smooth = np.concatenate([zero, parts.smooth]) * scale

    rough_term = np.einsum("kim,k...m->...i", integrand[:-1], np.diff(rough, axis=0))

    nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
    points = (offsets - dt)[:, None] + 0.5 * dt * (1.0 + nodes)[None, :]
    at_points = smooth_part(history, H, s, points.ravel()) * scale
    at_points = at_points.reshape((cells, n_gauss) + at_points.shape[1:])
    cell_means = 0.5 * np.tensordot(weights, at_points, axes=([0], [1]))
    slopes = np.diff(integrand, axis=0) / dt
    smooth_term = (
        np.einsum("im,...m->...i", integrand[-1], smooth[-1])
        - np.einsum("im,...m->...i", integrand[0], smooth[0])
        - np.einsum("kim,k...m->...i", slopes, cell_means) * dt
    )
    return rough_term + smooth_term
