"""
Slow-Fast Lab Module

Fast environment processes (Ornstein-Uhlenbeck, fractional OU with a
dissipative drift, time-changed OU with polynomial mixing), total variation
mixing of the OU transition law, the ergodic deviation of time-rescaled
coefficients, the averaging experiment X^eps against X_bar, and the Wiener
counterexample whose L^2 gap does not close.

Seed layout under a master seed: stream (0, r) drives replica r's Q-fBm,
stream (1, r, i) its fast path at the i-th epsilon.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special, stats

from coefficients import CoefficientPair, NemytskiiSpec, StationaryLaw, average_coefficient, build_pair
from fbm import QfbmPath, QSpec, ScalarPath, UniformGrid, sample_fgn, sample_qfbm
from holder_metrics import Ensemble, RateFit, b_alpha_p_norm, fit_rate, mild_holder_norms, neg_holder_norms, pair_lags
from mild_solver import Coefficients, SolveConfig, solve_mild
from spectral_core import DiagonalGenerator
from utils import SeedLike, child_seed, make_rng, parallel_map

logger = logging.getLogger(__name__)

FAST_KINDS = ("ou", "frac_ou", "slowed_ou")
FAST_SAMPLINGS = ("cell_mean", "left")
MIN_EPSILON_LEVELS = 5
BURN_IN_RELAXATION_TIMES = 20.0


def _tent(y: np.ndarray, radius: float) -> np.ndarray:
    """Odd Lipschitz bump: y on |y| <= R/2, back to 0 at |y| = R, 0 beyond."""
    a = np.abs(y)
    out = np.where(a <= 0.5 * radius, a, np.clip(radius - a, 0.0, None))
    return np.sign(y) * out


@dataclass(frozen=True)
class FastSpec:
    """
    Fast environment Y in its own time scale.

    ou:        dY = -Y dt + sqrt(2) dW, pi = N(0, 1)
    frac_ou:   dY = b(Y) dt + sigma dB_hat with b(y) = -kappa y + (lam + kappa) tent_R(y),
               expanding at rate lam near 0 and contracting at rate kappa beyond R
    slowed_ou: Y_t = U_{tau(t)}, U an OU process, tau(t) = rho log(1 + t) or t^theta
    """

    kind: str = "ou"
    fine_step: float = 0.01
    y0: Union[str, float] = "stationary"
    scheme: str = "euler"
    hurst: float = 0.75
    sigma: float = 1.0
    kappa: float = 1.0
    lam: float = 0.5
    radius: float = 1.0
    time_change: str = "log"
    rho: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        if self.kind not in FAST_KINDS:
            raise ValueError(f"Unknown fast process kind: {self.kind}")
        if not self.fine_step > 0:
            raise ValueError(f"fine_step must be positive, got {self.fine_step}")
        if self.fine_step > 0.1 * self.relaxation_time:
            raise ValueError(
                f"fine_step {self.fine_step} exceeds 0.1 of the relaxation time {self.relaxation_time}"
            )
        if self.scheme not in ("euler", "exact"):
            raise ValueError(f"Unknown fast scheme: {self.scheme}")
        if self.kind == "frac_ou" and not 0.0 < self.hurst < 1.0:
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {self.hurst}")
        if self.kind == "slowed_ou" and self.time_change not in ("log", "power"):
            raise ValueError(f"Unknown time change: {self.time_change}")

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.kappa if self.kind == "frac_ou" else 1.0

    @classmethod
    def from_config(cls, block: Dict[str, Any]) -> "FastSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(block) - known
        if unknown:
            raise ValueError(f"Unknown fast settings: {sorted(unknown)}")
        return cls(**block)

    def drift(self, y: np.ndarray) -> np.ndarray:
        if self.kind != "frac_ou":
            return -np.asarray(y, dtype=float)
        y = np.asarray(y, dtype=float)
        return -self.kappa * y + (self.lam + self.kappa) * _tent(y, self.radius)

    def clock(self, t: np.ndarray) -> np.ndarray:
        """Intrinsic OU time of the slowed process."""
        t = np.asarray(t, dtype=float)
        if self.time_change == "log":
            return self.rho * np.log1p(t)
        return t ** self.theta

    @property
    def stationary_law(self) -> StationaryLaw:
        if self.kind == "frac_ou":
            raise ValueError("The fractional OU law is only available empirically")
        return StationaryLaw.gaussian(0.0, 1.0)


def _initial_values(spec: FastSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if spec.y0 == "stationary":
        if spec.kind == "frac_ou":
            return np.zeros(count)
        return rng.standard_normal(count)
    return np.full(count, float(spec.y0))


def _ou_path(spec: FastSpec, steps: int, rng: np.random.Generator, count: int) -> np.ndarray:
    dt = spec.fine_step
    out = np.empty((count, steps + 1))
    out[:, 0] = _initial_values(spec, rng, count)
    noise = rng.standard_normal((steps, count))
    if spec.scheme == "exact":
        decay, scale = np.exp(-dt), np.sqrt(-np.expm1(-2 * dt))
        for k in range(steps):
            out[:, k + 1] = decay * out[:, k] + scale * noise[k]
    else:
        scale = np.sqrt(2 * dt)
        for k in range(steps):
            out[:, k + 1] = out[:, k] - out[:, k] * dt + scale * noise[k]
    return out


def _frac_ou_path(spec: FastSpec, steps: int, seed: SeedLike, count: int) -> np.ndarray:
    dt = spec.fine_step
    burn = int(np.ceil(BURN_IN_RELAXATION_TIMES * spec.relaxation_time / dt)) if spec.y0 == "stationary" else 0
    rng = make_rng(child_seed(seed, 0))
    increments = sample_fgn(spec.hurst, burn + steps, dt, child_seed(seed, 1), replicas=count)
    y = _initial_values(spec, rng, count)
    out = np.empty((count, steps + 1))
    if burn == 0:
        out[:, 0] = y
    for k in range(burn + steps):
        y = y + spec.drift(y) * dt + spec.sigma * increments[:, k]
        if k + 1 >= burn:
            out[:, k + 1 - burn] = y
    return out


def _slowed_ou_path(spec: FastSpec, steps: int, rng: np.random.Generator, count: int) -> np.ndarray:
    clock = spec.clock(np.arange(steps + 1) * spec.fine_step)
    gaps = np.diff(clock)
    out = np.empty((count, steps + 1))
    out[:, 0] = _initial_values(spec, rng, count)
    noise = rng.standard_normal((steps, count))
    for k in range(steps):
        out[:, k + 1] = np.exp(-gaps[k]) * out[:, k] + np.sqrt(-np.expm1(-2 * gaps[k])) * noise[k]
    return out


def fast_steps(spec: FastSpec, horizon: float) -> int:
    """Number of fine steps covering [0, horizon] in fast time."""
    if horizon <= 0:
        raise ValueError(f"Horizon must be positive, got {horizon}")
    return int(np.ceil(horizon / spec.fine_step - 1e-9))


def sample_fast_path(
    spec: FastSpec, horizon: float, seed: SeedLike, replicas: Optional[int] = None
) -> Union[ScalarPath, np.ndarray]:
    """
    Sample the fast process on [0, horizon] at spacing fine_step.

    Args:
        spec: Fast process
        horizon: Length in fast time
        seed: Seed of this path (or ensemble)
        replicas: None for one ScalarPath, else an array (replicas, steps + 1)

    Returns:
        ScalarPath or array of paths
    """
    steps = fast_steps(spec, horizon)
    count = 1 if replicas is None else int(replicas)
    if spec.kind == "frac_ou":
        paths = _frac_ou_path(spec, steps, seed, count)
    elif spec.kind == "slowed_ou":
        paths = _slowed_ou_path(spec, steps, make_rng(seed), count)
    else:
        paths = _ou_path(spec, steps, make_rng(seed), count)
    if replicas is None:
        return ScalarPath(UniformGrid(spec.fine_step, steps), paths[0])
    return paths


# ---------------------------------------------------------------------------
# Mixing
# ---------------------------------------------------------------------------

def _gaussian_crossings(mean: float, std: float) -> np.ndarray:
    """Points where the densities of N(mean, std^2) and N(0, 1) agree."""
    quad = 0.5 - 0.5 / std ** 2
    lin = mean / std ** 2
    const = -0.5 * mean ** 2 / std ** 2 - np.log(std)
    if abs(quad) < 1e-14:
        return np.array([]) if lin == 0 else np.array([-const / lin])
    roots = np.roots([quad, lin, const])
    return np.sort(roots[np.isreal(roots)].real)


def tv_gaussian_cdf(mean: float, std: float) -> float:
    """TV between N(mean, std^2) and N(0, 1) from CDF differences between density crossings."""
    if std == 0:
        return 1.0
    edges = np.concatenate([[-np.inf], _gaussian_crossings(mean, std), [np.inf]])
    p = np.diff(stats.norm.cdf(edges, loc=mean, scale=std))
    q = np.diff(stats.norm.cdf(edges))
    return float(0.5 * np.sum(np.abs(p - q)))


def tv_to_stationary_ou(state: float, elapsed: float) -> float:
    """
    Total variation between the OU transition law from state and N(0, 1).

    Args:
        state: Starting value m
        elapsed: Time tau >= 0

    Returns:
        TV(N(m e^-tau, 1 - e^-2tau), N(0, 1)) by density-difference quadrature; 1 at tau = 0
    """
    if elapsed < 0:
        raise ValueError(f"Elapsed time must be non-negative, got {elapsed}")
    if elapsed == 0:
        return 1.0
    mean = state * np.exp(-elapsed)
    std = np.sqrt(-np.expm1(-2 * elapsed))
    if std == 0:
        return 1.0
    p = stats.norm(loc=mean, scale=std)
    q = stats.norm()
    crossings = _gaussian_crossings(mean, std)
    lo = min(mean - 12 * std, -12.0)
    hi = max(mean + 12 * std, 12.0)
    edges = np.concatenate([[lo], crossings[(crossings > lo) & (crossings < hi)], [hi]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(lambda x: abs(p.pdf(x) - q.pdf(x)), a, b, limit=200)
        total += value
    return float(min(1.0, 0.5 * total))


def mean_tv_ou(elapsed: float, order: int = 32) -> float:
    """E over m ~ N(0, 1) of tv_to_stationary_ou(m, elapsed)."""
    law = StationaryLaw.gaussian(order=order)
    return law.expectation(np.vectorize(lambda m: tv_to_stationary_ou(float(m), elapsed)))


def tv_slowed_ou(spec: FastSpec, state: float, start: float, end: float) -> float:
    """TV to pi of the slowed process law at time end given Y_start = state."""
    if spec.kind != "slowed_ou":
        raise ValueError("Time-changed TV needs a slowed_ou spec")
    return tv_to_stationary_ou(state, float(spec.clock(end) - spec.clock(start)))


def frac_ou_stationary_variance(hurst: float, kappa: float = 1.0, sigma: float = 1.0) -> Tuple[float, float]:
    """
    Stationary variance of dY = -kappa Y dt + sigma dB^H.

    Returns:
        (spectral-density quadrature, closed form sigma^2 H Gamma(2H) kappa^(-2H))
    """
    c_h = special.gamma(2 * hurst + 1) * np.sin(np.pi * hurst) / (2 * np.pi)

    def density(w: float) -> float:
        return sigma ** 2 * c_h * abs(w) ** (1 - 2 * hurst) / (kappa ** 2 + w ** 2)

    near, _ = integrate.quad(density, 0.0, 1.0, limit=200)
    far, _ = integrate.quad(density, 1.0, np.inf, limit=200)
    closed = sigma ** 2 * hurst * special.gamma(2 * hurst) * kappa ** (-2 * hurst)
    return float(2 * (near + far)), float(closed)


def dissipativity_report(spec: FastSpec, seed: SeedLike, samples: int = 20000) -> Dict[str, float]:
    """
    Sampled one-sided Lipschitz constants of the fast drift.

    Returns:
        {"global": max <b(x)-b(y), x-y> / |x-y|^2 (compare with lam),
         "outside": the same over |x|, |y| > R (compare with -kappa), ...}
    """
    rng = make_rng(seed)
    scale = 4.0 * spec.radius
    x = rng.uniform(-scale, scale, samples)
    y = rng.uniform(-scale, scale, samples)
    keep = np.abs(x - y) > 1e-9
    x, y = x[keep], y[keep]
    quotient = (spec.drift(x) - spec.drift(y)) * (x - y) / (x - y) ** 2
    outside = (np.abs(x) > spec.radius) & (np.abs(y) > spec.radius)
    report = {
        "global": float(np.max(quotient)),
        "outside": float(np.max(quotient[outside])) if np.any(outside) else float("nan"),
        "lam": float(spec.lam),
        "kappa": float(spec.kappa),
    }
    report["holds"] = float(report["global"] <= spec.lam + 1e-9 and report["outside"] <= -spec.kappa + 1e-9)
    return report


# ---------------------------------------------------------------------------
# Ergodic deviation
# ---------------------------------------------------------------------------

@dataclass
class ErgodicReport:
    epsilons: List[float]
    values: List[float]
    stderrs: List[float]
    pair_strategies: List[str]
    fit: Optional[RateFit] = None
    per_replica: List[np.ndarray] = field(default_factory=list)


def _fast_law(pair: CoefficientPair, fast: FastSpec, seed: SeedLike) -> StationaryLaw:
    if fast.kind != "frac_ou":
        return fast.stationary_law
    sample = sample_fast_path(fast, 2000.0 * fast.relaxation_time, child_seed(seed, 9))
    return StationaryLaw.empirical(sample.values)


def ergodic_deviation(
    pair: CoefficientPair,
    fast: FastSpec,
    x: np.ndarray,
    delta: float,
    p: float,
    epsilons: Sequence[float],
    replicas: int,
    seed: SeedLike,
    horizon: float = 1.0,
    fit: bool = True,
    threads: int = 1,
    z: Optional[np.ndarray] = None,
    obs_steps: Optional[int] = None,
) -> ErgodicReport:
    """
    L^p norm of the negative Holder deviation |G_eps(., x) - g_bar(x)|_{C^-delta}.

    G_eps(t, x) = g(x, Y_{t/eps}) on [0, horizon]; with z given the Lipschitz
    variant (G_eps(x) - g_bar(x)) - (G_eps(z) - g_bar(z)) divided by |x - z|
    is measured instead. Primitives always use every fast sample. With
    obs_steps the sup runs over pairs of a slow grid of obs_steps cells;
    cells much longer than eps show the sqrt(eps) contraction of time
    averages, while lags below eps only shrink like eps^delta.

    Args:
        pair: Coefficient pair (only its diffusion is used)
        fast: Fast process
        x: Frozen slow state
        delta: Negative Holder exponent in (0, 1)
        p: Moment, at least 2
        epsilons: Time-scale separations
        replicas: Fast paths per epsilon
        seed: Master seed
        horizon: Slow time horizon
        fit: Fit value against epsilon (needs 5 levels or more)
        threads: Worker threads over epsilons
        z: Second frozen state for the Lipschitz variant
        obs_steps: Cells of the slow observation grid (every fast sample otherwise)

    Returns:
        ErgodicReport
    """
    if p < 2:
        raise ValueError(f"Moment p must be at least 2, got {p}")
    if fit and len(epsilons) < MIN_EPSILON_LEVELS:
        raise ValueError(f"Rate fitting needs at least {MIN_EPSILON_LEVELS} epsilon levels, got {len(epsilons)}")
    if any(eps <= 0 for eps in epsilons):
        raise ValueError("Epsilons must be positive")
    strides = [1] * len(epsilons)
    if obs_steps is not None:
        for i, eps in enumerate(epsilons):
            steps = fast_steps(fast, horizon / eps)
            if obs_steps < 1 or steps % obs_steps:
                raise ValueError(
                    f"eps={eps}: {steps} fast steps do not split into {obs_steps} observation cells"
                )
            strides[i] = steps // obs_steps
    law = _fast_law(pair, fast, seed)
    mean_g = law.expectation(pair.modulation_g)
    base = pair.base_g(np.asarray(x, dtype=float))
    if z is not None:
        gap = float(np.linalg.norm(np.asarray(x) - np.asarray(z)))
        if gap == 0:
            raise ValueError("Lipschitz variant needs x != z")
        base = (base - pair.base_g(np.asarray(z, dtype=float))) / gap
    size = float(np.linalg.norm(base))

    def one_level(item: Tuple[int, float]) -> Tuple[np.ndarray, str]:
        i, eps = item
        paths = sample_fast_path(fast, horizon / eps, child_seed(seed, 1, i), replicas=replicas)
        deviation = pair.modulation_g(paths) - mean_g
        dt = fast.fine_step * eps
        _, strategy = pair_lags((paths.shape[1] - 1) // strides[i])
        return size * neg_holder_norms(deviation, dt, delta, strides[i]), strategy

    results = parallel_map(one_level, list(enumerate(epsilons)), threads)
    report = ErgodicReport([float(e) for e in epsilons], [], [], [])
    for norms, strategy in results:
        moment = np.mean(norms ** p)
        value = moment ** (1.0 / p)
        # delta method for the p-th root of a sample mean
        stderr = value / (p * moment) * np.std(norms ** p, ddof=1) / np.sqrt(len(norms)) if moment > 0 else 0.0
        report.values.append(float(value))
        report.stderrs.append(float(stderr))
        report.pair_strategies.append(strategy)
        report.per_replica.append(norms)
    if fit and all(v > 0 for v in report.values):
        report.fit = fit_rate(report.epsilons, report.values)
    return report


# ---------------------------------------------------------------------------
# Averaging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AveragingConfig:
    epsilons: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    T: float = 1.0
    alpha: float = 0.55
    H: float = 0.75
    n_modes: int = 16
    m_modes: int = 8
    replicas: int = 200
    p: float = 2.0
    seed: int = 0
    q_exponent: float = 1.5
    slow_steps: Optional[int] = None
    x0_amplitude: float = 0.5
    fast_sampling: str = "cell_mean"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("Epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("Epsilons must be strictly descending")
        if not 0 < self.alpha < self.H:
            raise ValueError(f"Need 0 < alpha < H, got alpha={self.alpha}, H={self.H}")
        if self.replicas < 1:
            raise ValueError("Need at least one replica")
        if self.fast_sampling not in FAST_SAMPLINGS:
            raise ValueError(f"Unknown fast sampling: {self.fast_sampling}")
        object.__setattr__(self, "epsilons", eps)

    @property
    def steps(self) -> int:
        """Slow steps resolving the smallest epsilon by a factor 8, rounded up to a power of two."""
        if self.slow_steps:
            return int(self.slow_steps)
        return int(2 ** np.ceil(np.log2(8 * self.T / min(self.epsilons))))

    @property
    def grid(self) -> UniformGrid:
        return UniformGrid.over(self.T, self.steps)

    @property
    def x0(self) -> np.ndarray:
        x0 = np.zeros(self.n_modes)
        x0[0] = self.x0_amplitude
        if self.n_modes > 1:
            x0[1] = 0.5 * self.x0_amplitude
        return x0


@dataclass
class AveragingResult:
    """
    Per-epsilon distances of X^eps to X_bar, shape (len(epsilons), replicas).

    distances are mild Holder seminorms of the difference, sup_distances its
    sup over grid times, lp_norms the L^p(Omega) mild Holder norm of the difference
    ensemble per epsilon, x_bar the averaged solution (n_steps + 1, replicas, n_modes).
    """

    epsilons: List[float]
    distances: np.ndarray
    medians: List[float]
    q90s: List[float]
    seeds: Dict[str, Any] = field(default_factory=dict)
    sup_distances: Optional[np.ndarray] = None
    x_bar: Optional[np.ndarray] = None
    lp_norms: List[float] = field(default_factory=list)

    @property
    def strictly_decreasing(self) -> bool:
        return _strictly_decreasing(self.medians)

    @property
    def shrinkage(self) -> float:
        return _shrinkage(self.medians)

    @property
    def sup_medians(self) -> List[float]:
        if self.sup_distances is None:
            return []
        return [float(np.median(d)) for d in self.sup_distances]

    @property
    def sup_strictly_decreasing(self) -> bool:
        return _strictly_decreasing(self.sup_medians)

    @property
    def sup_shrinkage(self) -> float:
        return _shrinkage(self.sup_medians)


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _shrinkage(values: Sequence[float]) -> float:
    return values[-1] / values[0] if values and values[0] > 0 else float("nan")


def run_averaging_experiment(
    cfg: AveragingConfig,
    fast: FastSpec,
    spec: NemytskiiSpec,
    modulation: str = "cos",
    threads: int = 1,
) -> AveragingResult:
    """
    Compare X^eps with the averaged solution X_bar replica by replica.

    Each replica draws one Q-fBm driver, shared by X_bar and every X^eps,
    and one fast path per epsilon. With cfg.fast_sampling "cell_mean" the
    modulations are averaged over each slow step, with "left" the fast state
    at the left end of the step is used.

    Args:
        cfg: Experiment settings
        fast: Fast process
        spec: Nemytskii coefficients
        modulation: Fast modulation of both coefficients
        threads: Worker threads over epsilons

    Returns:
        AveragingResult with distances of shape (len(epsilons), replicas)
    """
    gen = DiagonalGenerator.laplacian_shifted(cfg.n_modes)
    q = QSpec.power_law(cfg.m_modes, cfg.q_exponent)
    pair = build_pair(spec, gen, modulation)
    law = _fast_law(pair, fast, cfg.seed)
    averaged = average_coefficient(pair, law)
    grid = cfg.grid
    solve_cfg = SolveConfig(dt=grid.dt, x0=cfg.x0)

    drivers = np.stack(
        [sample_qfbm(q, cfg.H, grid, child_seed(cfg.seed, 0, r)).values for r in range(cfg.replicas)],
        axis=1,
    )
    driver = QfbmPath(grid, drivers)
    x_bar = solve_mild(gen, Coefficients.from_pair(averaged), driver, solve_cfg).values
    logger.info(f"Averaged solution ready: {cfg.replicas} replicas, {grid.n_steps} steps")

    slow_dt = grid.dt if cfg.fast_sampling == "cell_mean" else None

    def one_level(item: Tuple[int, float]) -> Tuple[np.ndarray, np.ndarray, float]:
        i, eps = item
        paths = np.stack(
            [
                sample_fast_path(fast, cfg.T / eps, child_seed(cfg.seed, 1, r, i)).values
                for r in range(cfg.replicas)
            ]
        )
        frozen = Coefficients.from_pair(pair, paths, fast_dt=fast.fine_step * eps, slow_dt=slow_dt)
        x_eps = solve_mild(gen, frozen, driver, solve_cfg).values
        diff = np.moveaxis(x_eps - x_bar, 0, -2)
        distances = mild_holder_norms(gen, diff, grid.dt, cfg.alpha)
        sups = np.max(np.linalg.norm(diff, axis=-1), axis=-1)
        lp_norm = b_alpha_p_norm(gen, Ensemble(grid, diff, tuple(range(cfg.replicas))), cfg.alpha, cfg.p)
        logger.info(f"eps={eps}: median distance {np.median(distances):.4g}, median sup {np.median(sups):.4g}")
        return distances, sups, lp_norm

    levels = parallel_map(one_level, list(enumerate(cfg.epsilons)), threads)
    distances = np.stack([d for d, _, _ in levels])
    return AveragingResult(
        epsilons=list(cfg.epsilons),
        distances=distances,
        medians=[float(np.median(d)) for d in distances],
        q90s=[float(np.quantile(d, 0.9)) for d in distances],
        seeds={"master": cfg.seed, "driver_stream": 0, "fast_stream": 1},
        sup_distances=np.stack([s for _, s, _ in levels]),
        x_bar=x_bar,
        lp_norms=[float(v) for _, _, v in levels],
    )


# ---------------------------------------------------------------------------
# Wiener counterexample
# ---------------------------------------------------------------------------

def counterexample_eta() -> float:
    return float(np.sqrt(0.5 * (1.0 + np.exp(-2.0))))


def counterexample_constant() -> float:
    """Limit of E(X^eps_t - X_bar_t)^2 / t: 1 + (1 - sqrt(2 (e + e^3))) / e^2."""
    e = np.e
    return float(1.0 + (1.0 - np.sqrt(2.0 * (e + e ** 3))) / e ** 2)


def wiener_counterexample(
    eps: float,
    t: float,
    replicas: int,
    seed: SeedLike,
    fast_step: float = 0.1,
    integrand: str = "cos",
    chunk: int = 10000,
) -> Dict[str, float]:
    """
    Monte Carlo estimate of E(X^eps_t - X_bar_t)^2 for dX^eps = cos(Y_{s/eps}) dW and X_bar = eta W.

    Y is a stationary OU process sampled exactly, so the estimate is unbiased
    for any step; fast_step is the spacing in fast time.

    Returns:
        {"eps", "t", "estimate", "stderr", "expected"}
    """
    if t <= 0:
        raise ValueError(f"Time must be positive, got {t}")
    if integrand not in ("cos", "constant"):
        raise ValueError(f"Unknown integrand: {integrand}")
    eta = counterexample_eta()
    steps = int(np.ceil(t / (eps * fast_step) - 1e-9))
    dt = t / steps
    tau = dt / eps
    decay, scale = np.exp(-tau), np.sqrt(-np.expm1(-2 * tau))
    rng = make_rng(seed)
    squares = []
    for start in range(0, replicas, chunk):
        count = min(chunk, replicas - start)
        y = rng.standard_normal(count)
        gap = np.zeros(count)
        for _ in range(steps):
            weight = np.cos(y) - eta if integrand == "cos" else np.zeros(count)
            gap += weight * rng.standard_normal(count) * np.sqrt(dt)
            y = decay * y + scale * rng.standard_normal(count)
        squares.append(gap ** 2)
    squares = np.concatenate(squares)
    expected = counterexample_constant() * t if integrand == "cos" else 0.0
    return {
        "eps": float(eps),
        "t": float(t),
        "estimate": float(np.mean(squares)),
        "stderr": float(np.std(squares, ddof=1) / np.sqrt(replicas)),
        "expected": float(expected),
    }


def moral_report(averaging: AveragingResult, counterexamples: Sequence[Dict[str, float]]) -> Dict[str, Any]:
    """
    Contrast the fBm averaging distances with the Wiener L^2 gap.

    The first should decrease in eps (sup distances when recorded, mild Holder
    distances otherwise); the second should stay at its constant.
    """
    decreasing = (
        averaging.sup_strictly_decreasing
        if averaging.sup_distances is not None
        else averaging.strictly_decreasing
    )
    estimates = [c["estimate"] for c in counterexamples]
    combined = [c["stderr"] for c in counterexamples]
    flat = all(
        abs(c["estimate"] - c["expected"]) <= 4 * c["stderr"] + 1e-12 for c in counterexamples
    )
    return {
        "averaging_medians": list(averaging.medians),
        "averaging_sup_medians": averaging.sup_medians,
        "averaging_decreasing": decreasing,
        "wiener_estimates": estimates,
        "wiener_stderrs": combined,
        "wiener_not_vanishing": flat and min(estimates) > 0.5 * counterexample_constant() * counterexamples[0]["t"],
    }
