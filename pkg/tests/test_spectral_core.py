import numpy as np
import pytest
from scipy.integrate import trapezoid

from spectral_core import (
    DiagonalGenerator,
    apply_fractional_power,
    apply_semigroup,
    apply_semigroup_to_operator,
    fractional_norm,
    semigroup_operator_norm,
    smoothing_constant,
)


def test_laplacian_shifted_eigenvalues():
    gen = DiagonalGenerator.laplacian_shifted(4)
    assert np.array_equal(gen.mu, [1.0, 2.0, 5.0, 10.0])
    assert gen.nu == 1.0
    assert gen.n_modes == 4


@pytest.mark.parametrize("mu", [[], [0.0, 1.0], [2.0, 1.0], [1.0, np.inf]])
def test_invalid_eigenvalues_rejected(mu):
    with pytest.raises(ValueError):
        DiagonalGenerator.explicit(mu)


def test_config_round_trip_keeps_kind():
    gen = DiagonalGenerator.laplacian_shifted(5)
    assert gen.to_config() == {"kind": "laplacian_shifted", "n_modes": 5}
    explicit = DiagonalGenerator.from_config({"kind": "explicit", "mu": [1.0, 3.0]})
    assert explicit.to_config() == {"kind": "explicit", "mu": [1.0, 3.0]}
    with pytest.raises(ValueError):
        DiagonalGenerator.from_config({"kind": "wave"})


def test_semigroup_is_identity_at_zero(gen8, rng):
    x = rng.standard_normal(8)
    assert np.array_equal(apply_semigroup(gen8, 0.0, x), x)


def test_semigroup_property(gen8, rng):
    x = rng.standard_normal(8)
    lhs = apply_semigroup(gen8, 0.3, apply_semigroup(gen8, 0.2, x))
    rhs = apply_semigroup(gen8, 0.5, x)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_semigroup_contracts(gen8, rng):
    x = rng.standard_normal(8)
    for t in (0.0, 0.1, 1.0, 5.0):
        assert np.linalg.norm(apply_semigroup(gen8, t, x)) <= np.linalg.norm(x) + 1e-14
        assert semigroup_operator_norm(gen8, t) == pytest.approx(np.exp(-t))


def test_semigroup_rejects_negative_time_and_bad_shape(gen8):
    with pytest.raises(ValueError):
        apply_semigroup(gen8, -0.1, np.zeros(8))
    with pytest.raises(ValueError):
        apply_semigroup(gen8, 0.1, np.zeros(7))


def test_semigroup_acts_on_batches(gen8, rng):
    x = rng.standard_normal((3, 8))
    out = apply_semigroup(gen8, 0.4, x)
    for row, expected in zip(out, x):
        assert np.allclose(row, apply_semigroup(gen8, 0.4, expected))


def test_operator_transport_acts_on_range(gen8, rng):
    op = rng.standard_normal((8, 3))
    out = apply_semigroup_to_operator(gen8, 0.2, op)
    z = rng.standard_normal(3)
    assert np.allclose(out @ z, apply_semigroup(gen8, 0.2, op @ z))
    with pytest.raises(ValueError):
        apply_semigroup_to_operator(gen8, 0.2, np.zeros((3, 8)))


def test_fractional_powers_compose(gen8, rng):
    x = rng.standard_normal(8)
    twice = apply_fractional_power(gen8, 0.3, apply_fractional_power(gen8, 0.4, x))
    assert np.allclose(twice, apply_fractional_power(gen8, 0.7, x), rtol=1e-12)
    assert np.array_equal(apply_fractional_power(gen8, 0.0, x), x)


def test_fractional_norm_matches_definition(gen8, rng):
    x = rng.standard_normal(8)
    assert fractional_norm(gen8, 0.0, x) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    assert fractional_norm(gen8, 0.5, x) == pytest.approx(np.sqrt(np.sum(gen8.mu * x ** 2)), rel=1e-12)
    assert isinstance(fractional_norm(gen8, 0.5, x), float)
    batch = fractional_norm(gen8, -0.5, np.stack([x, 2 * x]))
    assert batch.shape == (2,)
    assert batch[1] == pytest.approx(2 * batch[0], rel=1e-12)


def test_fractional_norm_monotone_in_kappa(gen8, rng):
    x = rng.standard_normal(8)
    values = [fractional_norm(gen8, k, x) for k in (-0.5, 0.0, 0.25, 0.5)]
    assert values == sorted(values)


def test_smoothing_bound_holds_on_every_mode(gen8):
    for t in (0.01, 0.1, 1.0):
        c = smoothing_constant(0.0, 0.5, t)
        gains = gen8.mu ** 0.5 * np.exp(-gen8.mu * t)
        assert np.all(gains <= c * (1 + 1e-12))


def test_identity_minus_semigroup_is_holder_in_time(gen8, rng):
    x = rng.standard_normal((5, 8))
    for theta in (0.25, 0.5, 1.0):
        bound = fractional_norm(gen8, theta, x)
        for t in (1e-3, 0.05, 0.5, 2.0):
            gap = np.linalg.norm(x - apply_semigroup(gen8, t, x), axis=-1)
            assert np.all(gap <= t ** theta * bound * (1 + 1e-12))


def test_smoothing_constant_edge_cases():
    assert smoothing_constant(0.3, 0.3, 0.5) == 1.0
    with pytest.raises(ValueError):
        smoothing_constant(0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        smoothing_constant(0.0, 0.5, 0.0)


def test_drift_filter_integrates_semigroup(gen8):
    dt = 0.05
    nodes = np.linspace(0.0, dt, 2001)
    numeric = trapezoid(np.exp(-np.outer(nodes, gen8.mu)), nodes, axis=0)
    assert np.allclose(gen8.drift_filter(dt), numeric, rtol=1e-6)
