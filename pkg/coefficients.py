"""
Coefficients Module

Nemytskii-type drift f and diffusion g acting on spectral states, their
modulation by the fast variable, and averaging of that modulation against a
stationary law (Gauss-Hermite for Gaussian laws, sample means otherwise).

States are coefficients in the Neumann cosine basis of L^2(0, pi):
e_0 = 1/sqrt(pi), e_k = sqrt(2/pi) cos(k eta), eigenfunctions of the shifted
Laplacian with mu_k = 1 + k^2. Pointwise maps are applied on DCT midpoints.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from spectral_core import DiagonalGenerator, fractional_norm
from utils import SeedLike, make_rng

logger = logging.getLogger(__name__)

MIN_HERMITE_ORDER = 8

Modulation = Callable[[np.ndarray], np.ndarray]

MODULATIONS: Dict[str, Modulation] = {
    "cos": np.cos,
    "identity": lambda y: np.asarray(y, dtype=float),
    "none": lambda y: np.ones_like(np.asarray(y, dtype=float)),
}


def to_collocation(x: np.ndarray, points: int) -> np.ndarray:
    """Values of the state at the midpoints eta_j = pi (j + 1/2) / points."""
    x = np.asarray(x, dtype=float)
    padded = np.zeros(x.shape[:-1] + (points,))
    padded[..., : x.shape[-1]] = x
    return np.sqrt(points / np.pi) * fft.idct(padded, type=2, norm="ortho", axis=-1)


def from_collocation(values: np.ndarray, n_modes: int) -> np.ndarray:
    """Cosine coefficients of midpoint values, truncated to n_modes."""
    points = values.shape[-1]
    coeffs = np.sqrt(np.pi / points) * fft.dct(values, type=2, norm="ortho", axis=-1)
    return coeffs[..., :n_modes]


def bump(r: np.ndarray, radius: float) -> np.ndarray:
    """Smooth cutoff exp(1 - 1 / (1 - (r/R)^2)) on r < R, zero beyond; bump(0) = 1."""
    z = np.square(np.asarray(r, dtype=float) / radius)
    inside = z < 1.0
    safe = np.where(inside, z, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


@dataclass(frozen=True)
class NemytskiiSpec:
    """
    Outer functions psi_i(u) = sin(c_i u), bump radius and noise weights.

    psi_0 builds the drift; psi_{j+1} builds column j of the diffusion with
    weight a_j.
    """

    n_modes: int
    psi_freqs: Tuple[float, ...]
    a: Tuple[float, ...]
    bump_radius: float = 1.0
    collocation_points: Optional[int] = None
    alpha: float = 0.5

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be positive, got {self.n_modes}")
        if self.bump_radius <= 0:
            raise ValueError(f"Bump radius must be positive, got {self.bump_radius}")
        if len(self.psi_freqs) < len(self.a) + 1:
            raise ValueError(
                f"Need {len(self.a) + 1} outer frequencies for {len(self.a)} noise modes, got {len(self.psi_freqs)}"
            )
        points = self.collocation_points or 2 * self.n_modes
        if points < 2 * self.n_modes:
            raise ValueError(
                f"Collocation with {points} points aliases {self.n_modes} modes; need at least {2 * self.n_modes}"
            )
        object.__setattr__(self, "collocation_points", int(points))
        object.__setattr__(self, "psi_freqs", tuple(float(c) for c in self.psi_freqs))
        object.__setattr__(self, "a", tuple(float(w) for w in self.a))

    @property
    def m_modes(self) -> int:
        return len(self.a)

    @property
    def a_norm(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.a))))

    @classmethod
    def default(cls, n_modes: int, m_modes: int, a_decay: float = 0.5, **kwargs: Any) -> "NemytskiiSpec":
        freqs = tuple(1.0 + 0.25 * i for i in range(m_modes + 1))
        weights = tuple(a_decay ** j for j in range(m_modes))
        return cls(n_modes=n_modes, psi_freqs=freqs, a=weights, **kwargs)

    @classmethod
    def from_config(cls, block: Dict[str, Any], n_modes: int, m_modes: int) -> "NemytskiiSpec":
        """
        Build the spec from the coefficient block of an experiment config.

        Args:
            block: {psi_freqs, bump_radius, a_decay, collocation_points, alpha}
            n_modes: State modes
            m_modes: Noise modes

        Returns:
            NemytskiiSpec
        """
        freqs = block.get("psi_freqs") or [1.0 + 0.25 * i for i in range(m_modes + 1)]
        a_decay = float(block.get("a_decay", 0.5))
        return cls(
            n_modes=n_modes,
            psi_freqs=tuple(freqs),
            a=tuple(a_decay ** j for j in range(m_modes)),
            bump_radius=float(block.get("bump_radius", 1.0)),
            collocation_points=block.get("collocation_points"),
            alpha=float(block.get("alpha", 0.5)),
        )


def nemytskii_apply(spec: NemytskiiSpec, outer_index: int, x: np.ndarray) -> np.ndarray:
    """
    T_psi(x): apply psi_i pointwise to the function with coefficients x.

    Args:
        spec: Nemytskii spec
        outer_index: Index i of psi_i
        x: States of shape (..., n_modes)

    Returns:
        Coefficients of psi_i(x(eta)), truncated to n_modes
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n_modes:
        raise ValueError(f"State has {x.shape[-1]} modes, spec expects {spec.n_modes}")
    if not 0 <= outer_index < len(spec.psi_freqs):
        raise ValueError(f"No outer function with index {outer_index}")
    values = to_collocation(x, spec.collocation_points)
    return from_collocation(np.sin(spec.psi_freqs[outer_index] * values), spec.n_modes)


@dataclass(frozen=True, eq=False)
class CoefficientPair:
    """
    f(x, y) = m_f(y) base_f(x) and g(x, y) = m_g(y) base_g(x).

    x has shape (..., n_modes) and y the matching leading shape; g returns
    operator values (..., n_modes, m_modes).
    """

    gen: DiagonalGenerator
    spec: NemytskiiSpec
    modulation_f: Modulation
    modulation_g: Modulation
    names: Tuple[str, str] = ("cos", "cos")
    autonomous: bool = False
    lipschitz_report: Dict[str, Any] = field(default_factory=dict)

    def base_f(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cutoff = bump(np.sum(x ** 2, axis=-1), self.spec.bump_radius)
        return cutoff[..., None] * nemytskii_apply(self.spec, 0, x)

    def base_g(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        weak = fractional_norm(self.gen, -self.spec.alpha, x)
        cutoff = bump(np.asarray(weak) ** 2, self.spec.bump_radius)
        columns = [
            a_j * nemytskii_apply(self.spec, j + 1, x) for j, a_j in enumerate(self.spec.a)
        ]
        return cutoff[..., None, None] * np.stack(columns, axis=-1)

    def f(self, x: np.ndarray, y: Any = 0.0) -> np.ndarray:
        m = np.asarray(self.modulation_f(np.asarray(y, dtype=float)), dtype=float)
        return m[..., None] * self.base_f(x)

    def g(self, x: np.ndarray, y: Any = 0.0) -> np.ndarray:
        m = np.asarray(self.modulation_g(np.asarray(y, dtype=float)), dtype=float)
        return m[..., None, None] * self.base_g(x)

    def with_report(self, report: Dict[str, Any]) -> "CoefficientPair":
        return replace(self, lipschitz_report=dict(report))


def build_pair(
    spec: NemytskiiSpec,
    gen: DiagonalGenerator,
    modulation: str = "cos",
    modulation_g: Optional[str] = None,
) -> CoefficientPair:
    """
    Drift and diffusion of the bump-truncated Nemytskii example.

    Args:
        spec: Nemytskii spec
        gen: Generator defining the weak norm inside the diffusion cutoff
        modulation: Name of m_f in MODULATIONS ("cos", "identity", "none")
        modulation_g: Name of m_g, defaults to modulation

    Returns:
        CoefficientPair
    """
    if gen.n_modes != spec.n_modes:
        raise ValueError(f"Generator has {gen.n_modes} modes, spec has {spec.n_modes}")
    name_g = modulation_g or modulation
    for name in (modulation, name_g):
        if name not in MODULATIONS:
            raise ValueError(f"Unknown modulation: {name}")
    return CoefficientPair(
        gen=gen,
        spec=spec,
        modulation_f=MODULATIONS[modulation],
        modulation_g=MODULATIONS[name_g],
        names=(modulation, name_g),
        autonomous=(modulation == "none" and name_g == "none"),
    )


@dataclass(frozen=True, eq=False)
class StationaryLaw:
    """Gaussian N(mean, std^2) integrated by Gauss-Hermite, or an empirical sample."""

    kind: str
    mean: float = 0.0
    std: float = 1.0
    order: int = 32
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.order < MIN_HERMITE_ORDER:
                raise ValueError(
                    f"Gauss-Hermite order must be at least {MIN_HERMITE_ORDER}, got {self.order}"
                )
            if self.std < 0:
                raise ValueError(f"Standard deviation must be non-negative, got {self.std}")
        elif self.kind == "empirical":
            samples = np.asarray(self.samples, dtype=float).ravel()
            if samples.size == 0:
                raise ValueError("Empirical law needs samples")
            object.__setattr__(self, "samples", samples)
        else:
            raise ValueError(f"Unknown stationary law: {self.kind}")

    @classmethod
    def gaussian(cls, mean: float = 0.0, std: float = 1.0, order: int = 32) -> "StationaryLaw":
        return cls("gaussian", mean=mean, std=std, order=order)

    @classmethod
    def empirical(cls, samples: Sequence[float]) -> "StationaryLaw":
        return cls("empirical", samples=np.asarray(samples, dtype=float))

    def expectation(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        if self.kind == "empirical":
            return float(np.mean(func(self.samples)))
        nodes, weights = np.polynomial.hermite.hermgauss(self.order)
        values = func(self.mean + np.sqrt(2.0) * self.std * nodes)
        return float(np.sum(weights * values) / np.sqrt(np.pi))


def _constant(value: float) -> Modulation:
    def modulation(y: np.ndarray) -> np.ndarray:
        return np.full(np.shape(y), value)

    return modulation


def average_coefficient(pair: CoefficientPair, pi: StationaryLaw) -> CoefficientPair:
    """
    Average the fast dependence out: f_bar(x) = int f(x, y) pi(dy), g_bar likewise.

    Returns:
        Autonomous pair whose modulations are the constants E m_f(Y), E m_g(Y)
    """
    mean_f = pi.expectation(pair.modulation_f)
    mean_g = pi.expectation(pair.modulation_g)
    logger.debug(f"Averaged modulations: f {mean_f:.6g}, g {mean_g:.6g}")
    return replace(
        pair,
        modulation_f=_constant(mean_f),
        modulation_g=_constant(mean_g),
        names=(f"mean={mean_f:.6g}", f"mean={mean_g:.6g}"),
        autonomous=True,
        lipschitz_report={},
    )


def averaged_modulations(pair: CoefficientPair, pi: StationaryLaw) -> Tuple[float, float]:
    return pi.expectation(pair.modulation_f), pi.expectation(pair.modulation_g)


def diffusion_norm_bound(pair: CoefficientPair, x: np.ndarray) -> float:
    """(sum a_i^2)^(1/2) sup|phi| max_i |T_psi_i(x)|, a bound for |g(x, y)| when |m_g| <= 1."""
    largest = max(
        float(np.linalg.norm(nemytskii_apply(pair.spec, j + 1, x))) for j in range(pair.spec.m_modes)
    )
    return pair.spec.a_norm * largest


def measure_lipschitz(
    pair: CoefficientPair,
    y_values: Sequence[float],
    seed: SeedLike,
    samples: int = 1000,
    scale: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Largest sampled difference quotients of x -> f(x, y) and x -> g(x, y).

    Pairs are drawn uniformly in direction with radii up to scale (default:
    the bump radius, so the cutoff region is covered).

    Returns:
        {"y": [...], "f": [...], "g": [...], "samples": n} with one entry per y
    """
    rng = make_rng(seed)
    n = pair.spec.n_modes
    scale = scale or np.sqrt(pair.spec.bump_radius)

    def draw() -> np.ndarray:
        direction = rng.standard_normal((samples, n))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        return direction * scale * rng.uniform(0.0, 1.2, size=(samples, 1))

    x, z = draw(), draw()
    gap = np.linalg.norm(x - z, axis=-1)
    report: Dict[str, Any] = {"y": [], "f": [], "g": [], "samples": samples}
    for y in y_values:
        yy = np.full(samples, float(y))
        df = np.linalg.norm(pair.f(x, yy) - pair.f(z, yy), axis=-1)
        dg = np.linalg.norm((pair.g(x, yy) - pair.g(z, yy)).reshape(samples, -1), axis=-1)
        report["y"].append(float(y))
        report["f"].append(float(np.max(df / gap)))
        report["g"].append(float(np.max(dg / gap)))
    return report
