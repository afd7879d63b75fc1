import numpy as np
import pytest

from fbm import UniformGrid, sample_fbm_paths
from holder_metrics import (
    Ensemble,
    SampledPath,
    b_alpha_p_norm,
    estimate_holder_exponent,
    fit_rate,
    holder_norm,
    increment_relation_gap,
    mild_holder_distance,
    mild_holder_norm,
    mild_holder_norms,
    neg_holder_norm,
    neg_holder_norms,
    norm_report_row,
    pair_lags,
    sup_norm,
)
from mild_solver import flow_path


def test_linear_path_holder_norms():
    grid = UniformGrid.over(1.0, 64)
    path = SampledPath(grid, 2.0 * grid.times)
    assert path.values.shape == (65, 1)
    assert holder_norm(path, 1.0) == pytest.approx(2.0)
    assert holder_norm(path, 0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        holder_norm(path, 0.0)
    with pytest.raises(ValueError):
        holder_norm(path, 1.5)


def test_holder_norm_of_shorter_horizon():
    grid = UniformGrid.over(0.25, 32)
    path = SampledPath(grid, grid.times)
    assert holder_norm(path, 0.5) == pytest.approx(0.25 ** 0.5)


def test_semigroup_flow_has_zero_mild_norm(gen8):
    grid = UniformGrid.over(1.0, 64)
    x0 = np.linspace(1.0, 0.1, 8)
    flow = flow_path(gen8, grid, x0)
    assert mild_holder_norm(gen8, flow, 0.5) < 1e-12
    assert holder_norm(flow, 0.5) > 0.1
    assert mild_holder_distance(gen8, flow, flow, 0.7) == 0.0


def test_batched_norms_match_single(gen8, rng):
    grid = UniformGrid.over(1.0, 32)
    values = rng.standard_normal((3, 33, 8))
    batch = mild_holder_norms(gen8, values, grid.dt, 0.6)
    single = [mild_holder_norm(gen8, SampledPath(grid, v), 0.6) for v in values]
    assert np.allclose(batch, single)
    with pytest.raises(ValueError):
        mild_holder_norms(gen8, values[..., :5], grid.dt, 0.6)


def test_pair_strategy():
    lags, strategy = pair_lags(100)
    assert strategy == "all" and len(lags) == 100
    lags, strategy = pair_lags(4096)
    assert strategy == "dyadic"
    assert list(lags) == [2 ** k for k in range(13)]


def test_increment_relation(gen8, rng):
    grid = UniformGrid.over(1.0, 40)
    path = SampledPath(grid, rng.standard_normal((41, 8)))
    assert increment_relation_gap(gen8, path) <= 1e-12


def test_neg_holder_norm_of_constant():
    grid = UniformGrid.over(1.0, 128)
    path = SampledPath(grid, np.full(129, 3.0))
    assert neg_holder_norm(path, 0.3) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        neg_holder_norms(np.zeros((1, 5)), 0.25, 0.0)
    with pytest.raises(ValueError):
        neg_holder_norms(np.zeros((1, 5)), 0.25, 1.0)


def test_neg_holder_norm_sees_oscillation():
    grid = UniformGrid.over(1.0, 1024)
    slow = np.cos(2 * np.pi * grid.times)
    fast = np.cos(2 * np.pi * 32 * grid.times)
    norms = neg_holder_norms(np.stack([slow, fast]), grid.dt, 0.3)
    assert norms[1] < 0.5 * norms[0]
    assert sup_norm(fast[:, None]) == pytest.approx(1.0)


def test_fit_rate_exact_power():
    xs = [1.0, 2.0, 4.0, 8.0]
    fit = fit_rate(xs, [3.0 * x ** 2 for x in xs])
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(np.log(3.0))
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.points == 4
    assert fit.to_dict()["slope"] == pytest.approx(2.0)


def test_fit_rate_constant_and_errors():
    fit = fit_rate([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
    with pytest.raises(ValueError):
        fit_rate([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0, 3.0], [1.0, 2.0])


def test_holder_exponent_of_fbm():
    grid = UniformGrid.over(1.0, 1024)
    paths = sample_fbm_paths(0.75, grid, 21, replicas=200)
    fit = estimate_holder_exponent(paths, grid.dt, [1, 2, 4, 8, 16, 32, 64])
    assert fit.slope == pytest.approx(1.5, abs=0.1)
    assert fit.r_squared > 0.99


def test_ensemble_validation():
    grid = UniformGrid.over(1.0, 4)
    values = np.zeros((2, 5, 3))
    assert Ensemble(grid, values, (1, 2)).replicas == 2
    with pytest.raises(ValueError):
        Ensemble(grid, values, (1, 1))
    with pytest.raises(ValueError):
        Ensemble(grid, values, (1,))
    with pytest.raises(ValueError):
        Ensemble(grid, np.zeros((2, 4, 3)), (1, 2))
    with pytest.raises(ValueError):
        Ensemble(grid, values, (1, 2), p_values=(0.5,))


def test_b_alpha_p_norm_monotone_in_p(gen8, rng):
    grid = UniformGrid.over(1.0, 16)
    paths = [SampledPath(grid, rng.standard_normal((17, 8))) for _ in range(5)]
    ens = Ensemble.from_paths(paths, seeds=range(5), p_values=(1.0, 2.0))
    assert ens.path(2).values.shape == (17, 8)
    low = b_alpha_p_norm(gen8, ens, 0.5, 1.0)
    high = b_alpha_p_norm(gen8, ens, 0.5, 2.0)
    assert 0 < low <= high + 1e-12
    with pytest.raises(ValueError):
        b_alpha_p_norm(gen8, ens, 0.5, 0.5)


def test_b_alpha_p_norm_of_flows_vanishes(gen8):
    grid = UniformGrid.over(1.0, 16)
    flows = [flow_path(gen8, grid, np.full(8, c)) for c in (0.5, 1.0)]
    ens = Ensemble.from_paths(flows, seeds=[0, 1])
    assert b_alpha_p_norm(gen8, ens, 0.5, 2.0) < 1e-12


def test_path_difference_needs_same_grid():
    a = SampledPath(UniformGrid.over(1.0, 4), np.zeros(5))
    b = SampledPath(UniformGrid.over(2.0, 4), np.zeros(5))
    with pytest.raises(ValueError):
        a - b


def _hilbert_schmidt_reference(gen, values, dt, gamma):
    n_steps = values.shape[-3] - 1
    best = np.zeros(values.shape[:-3])
    for lag in range(1, n_steps + 1):
        factors = np.exp(-gen.mu * lag * dt)[:, None]
        gap = values[..., lag:, :, :] - factors * values[..., :-lag, :, :]
        norms = np.sqrt(np.sum(gap ** 2, axis=(-2, -1)))
        best = np.maximum(best, norms.max(axis=-1) / (lag * dt) ** gamma)
    return best


def test_operator_paths_use_hilbert_schmidt_norm(gen8, rng):
    grid = UniformGrid.over(1.0, 32)
    ops = rng.standard_normal((2, 33, 8, 3))
    assert np.allclose(mild_holder_norms(gen8, ops, grid.dt, 0.6), _hilbert_schmidt_reference(gen8, ops, grid.dt, 0.6))
    square = rng.standard_normal((33, 8, 8))
    value = mild_holder_norms(gen8, square, grid.dt, 0.6, operator=True)
    assert np.ndim(value) == 0
    assert value == pytest.approx(float(_hilbert_schmidt_reference(gen8, square, grid.dt, 0.6)))
    with pytest.raises(ValueError):
        mild_holder_norms(gen8, rng.standard_normal((33, 5, 3)), grid.dt, 0.6)


def test_b_alpha_p_norm_of_one_replica_is_mild_norm(gen8, rng):
    grid = UniformGrid.over(1.0, 24)
    path = SampledPath(grid, rng.standard_normal((25, 8)))
    ens = Ensemble(grid, path.values[None], (3,))
    for p in (1.0, 2.0, 4.0):
        assert b_alpha_p_norm(gen8, ens, 0.55, p) == pytest.approx(mild_holder_norm(gen8, path, 0.55))


def test_neg_holder_stride_visits_coarse_pairs(rng):
    grid = UniformGrid.over(1.0, 128)
    values = rng.standard_normal((3, 129))
    full = neg_holder_norms(values, grid.dt, 0.3)
    assert np.allclose(neg_holder_norms(values, grid.dt, 0.3, stride=1), full)
    coarse = neg_holder_norms(values, grid.dt, 0.3, stride=16)
    assert np.all(coarse <= full + 1e-12)
    assert np.all(coarse > 0)
    for stride in (0, 3, 256):
        with pytest.raises(ValueError):
            neg_holder_norms(values, grid.dt, 0.3, stride=stride)


def test_norm_report_row():
    row = norm_report_row("mild_holder", 0.55, 1.25, 512)
    assert list(row) == ["norm_kind", "gamma_or_delta", "p", "value", "n_grid", "n_replicas"]
    assert np.isnan(row["p"]) and row["n_replicas"] == 1
    row = norm_report_row("neg_holder", 0.3, 0.5, 8, n_replicas=500, p=2.0)
    assert row["p"] == 2.0 and row["n_grid"] == 8
    with pytest.raises(ValueError):
        norm_report_row("besov", 0.5, 1.0, 8)
