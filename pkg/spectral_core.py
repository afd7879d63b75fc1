"""
Spectral Core Module

Diagonal model of the sectorial generator A, its analytic semigroup S_t and
the interpolation-space norms. States live in the eigenbasis of A, so every
operator here acts mode by mode.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

# Coordinates of a state in the eigenbasis of A, last axis indexes the mode.
SpectralVector = np.ndarray
# Operator values K -> H, shape (..., n_modes, m_modes).
SpectralOperatorValue = np.ndarray


@dataclass(frozen=True, eq=False)
class DiagonalGenerator:
    """Eigenvalues mu_k of -A, ascending and strictly positive."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        if mu.size == 0:
            raise ValueError("Generator needs at least one mode")
        if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError(f"Eigenvalues of -A must be positive and finite, got {mu}")
        if np.any(np.diff(mu) < 0):
            raise ValueError("Eigenvalues of -A must be sorted ascending")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @property
    def n_modes(self) -> int:
        return int(self.mu.size)

    @property
    def nu(self) -> float:
        """Decay rate of the semigroup, ||S_t|| = exp(-nu t)."""
        return float(self.mu[0])

    @classmethod
    def laplacian_shifted(cls, n_modes: int) -> "DiagonalGenerator":
        """A = Laplacian - 1 in the cosine basis: mu_k = 1 + k^2."""
        if n_modes < 1:
            raise ValueError(f"n_modes must be positive, got {n_modes}")
        k = np.arange(n_modes, dtype=float)
        return cls(1.0 + k ** 2)

    @classmethod
    def explicit(cls, mu: Sequence[float]) -> "DiagonalGenerator":
        return cls(np.asarray(mu, dtype=float))

    @classmethod
    def from_config(cls, block: Dict[str, Any]) -> "DiagonalGenerator":
        """
        Build a generator from its config block.

        Args:
            block: {"kind": "laplacian_shifted", "n_modes": n} or
                {"kind": "explicit", "mu": [...]}

        Returns:
            The generator
        """
        kind = block.get("kind", "laplacian_shifted")
        if kind == "laplacian_shifted":
            return cls.laplacian_shifted(int(block["n_modes"]))
        if kind == "explicit":
            return cls.explicit(block["mu"])
        raise ValueError(f"Unknown generator kind: {kind}")

    def to_config(self) -> Dict[str, Any]:
        if np.array_equal(self.mu, 1.0 + np.arange(self.n_modes) ** 2):
            return {"kind": "laplacian_shifted", "n_modes": self.n_modes}
        return {"kind": "explicit", "mu": self.mu.tolist()}

    def semigroup_factors(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """exp(-mu t) with shape t.shape + (n_modes,)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError(f"Semigroup time must be non-negative, got {t}")
        return np.exp(-np.multiply.outer(t, self.mu))

    def drift_filter(self, dt: float) -> np.ndarray:
        """(1 - exp(-mu dt)) / mu, the exact integral of S_r over [0, dt]."""
        if dt < 0:
            raise ValueError(f"Step must be non-negative, got {dt}")
        return -np.expm1(-self.mu * dt) / self.mu


def _check_dimension(gen: DiagonalGenerator, x: np.ndarray) -> None:
    if x.shape[-1] != gen.n_modes:
        raise ValueError(
            f"State has {x.shape[-1]} modes but the generator has {gen.n_modes}"
        )


def apply_semigroup(gen: DiagonalGenerator, t: float, x: SpectralVector) -> SpectralVector:
    """
    Apply S_t to a state (or a batch of states along leading axes).

    Args:
        gen: Diagonal generator
        t: Non-negative time
        x: Coordinates with the mode index on the last axis

    Returns:
        exp(-mu_k t) x_k mode by mode
    """
    if t < 0:
        raise ValueError(f"Semigroup time must be non-negative, got {t}")
    x = np.asarray(x, dtype=float)
    _check_dimension(gen, x)
    return np.exp(-gen.mu * t) * x


def apply_semigroup_to_operator(
    gen: DiagonalGenerator, t: float, op: SpectralOperatorValue
) -> SpectralOperatorValue:
    """S_t acting on the range side of an operator value of shape (..., n_modes, m)."""
    if t < 0:
        raise ValueError(f"Semigroup time must be non-negative, got {t}")
    op = np.asarray(op, dtype=float)
    if op.shape[-2] != gen.n_modes:
        raise ValueError(
            f"Operator maps into {op.shape[-2]} modes but the generator has {gen.n_modes}"
        )
    return np.exp(-gen.mu * t)[:, None] * op


def semigroup_operator_norm(gen: DiagonalGenerator, t: float) -> float:
    # The diagonal semigroup is a contraction with sharp constant C = 1.
    if t < 0:
        raise ValueError(f"Semigroup time must be non-negative, got {t}")
    return float(np.exp(-gen.nu * t))


def apply_fractional_power(gen: DiagonalGenerator, kappa: float, x: SpectralVector) -> SpectralVector:
    """(-A)^kappa applied spectrally: mu_k^kappa x_k."""
    x = np.asarray(x, dtype=float)
    _check_dimension(gen, x)
    if kappa == 0:
        return x.copy()
    return gen.mu ** kappa * x


def fractional_norm(gen: DiagonalGenerator, kappa: float, x: SpectralVector) -> Union[float, np.ndarray]:
    """
    Norm of x in the interpolation space H_kappa.

    Args:
        gen: Diagonal generator
        kappa: Any real interpolation exponent
        x: State, or a batch of states along leading axes

    Returns:
        (sum_k mu_k^(2 kappa) x_k^2)^(1/2); a float for a single state
    """
    weighted = apply_fractional_power(gen, kappa, x)
    norm = np.sqrt(np.sum(weighted ** 2, axis=-1))
    return float(norm) if np.ndim(norm) == 0 else norm


def smoothing_constant(kappa_low: float, kappa_high: float, t: float) -> float:
    """Sharp diagonal constant in ||S_t x||_{k2} <= C ||x||_{k1}, C = (theta / (e t))^theta."""
    theta = kappa_high - kappa_low
    if theta < 0:
        raise ValueError("kappa_high must not be below kappa_low")
    if t <= 0:
        raise ValueError(f"Smoothing needs t > 0, got {t}")
    if theta == 0:
        return 1.0
    return float((theta / (np.e * t)) ** theta)
