import numpy as np
import pytest

from fbm import (
    QfbmPath,
    QSpec,
    UniformGrid,
    build_noise_history,
    circulant_embedding_is_valid,
    decompose_increment,
    fbm_covariance,
    fbm_path,
    fgn_autocovariance,
    kernel_variance,
    kernel_weights,
    mvn_increment,
    mvn_normalization,
    mvn_normalization_closed_form,
    resolve_history_horizon,
    sample_fbm_paths,
    sample_fgn,
    sample_qfbm,
    smooth_part,
    smooth_part_derivative,
)
from utils import child_seed


def test_grid_basics():
    grid = UniformGrid.over(2.0, 8)
    assert grid.dt == 0.25
    assert len(grid) == 9
    assert grid.index_of(0.75) == 3
    assert grid.coarsen(2).n_steps == 4
    with pytest.raises(ValueError):
        grid.index_of(0.1)
    with pytest.raises(ValueError):
        grid.coarsen(3)
    with pytest.raises(ValueError):
        UniformGrid(0.0, 4)


def test_qspec_validation_and_config():
    q = QSpec.power_law(4, 2.0)
    assert np.allclose(q.lam, [1.0, 0.25, 1 / 9, 1 / 16])
    assert q.trace == pytest.approx(np.sum(q.lam))
    assert np.allclose(QSpec.from_config(q.to_config()).lam, q.lam)
    assert QSpec.from_config({"m_modes": 3}).m_modes == 3
    with pytest.raises(ValueError):
        QSpec([0.5, 1.0])
    with pytest.raises(ValueError):
        QSpec([1.0, 0.0])


def test_covariance_formula():
    assert fbm_covariance(0.75, 1.0, 1.0) == pytest.approx(1.0)
    assert fbm_covariance(0.5, 0.3, 0.7) == pytest.approx(0.3)
    assert fbm_covariance(0.75, 0.0, 0.4) == 0.0
    with pytest.raises(ValueError):
        fbm_covariance(1.0, 0.1, 0.2)
    with pytest.raises(ValueError):
        fbm_covariance(0.75, -0.1, 0.2)


def test_fgn_autocovariance_unit_variance():
    gamma = fgn_autocovariance(0.75, 5)
    assert gamma[0] == pytest.approx(1.0)
    assert np.all(gamma[1:] > 0)
    assert np.allclose(fgn_autocovariance(0.5, 4), [1.0, 0.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("H", [0.1, 0.3, 0.5, 0.6, 0.75, 0.9])
def test_circulant_embedding_valid(H):
    assert circulant_embedding_is_valid(H, 256)


def test_sample_fgn_shapes_and_errors():
    assert sample_fgn(0.75, 16, 0.1, 0).shape == (16,)
    assert sample_fgn(0.75, 16, 0.1, 0, replicas=3).shape == (3, 16)
    with pytest.raises(ValueError):
        sample_fgn(0.0, 16, 0.1, 0)
    with pytest.raises(ValueError):
        sample_fgn(0.75, 0, 0.1, 0)
    with pytest.raises(ValueError):
        sample_fgn(0.75, 16, -0.1, 0)
    with pytest.raises(ValueError):
        sample_fgn(0.75, 16, 0.1, 0, method="hosking")


def test_sampling_is_deterministic():
    a = sample_fgn(0.75, 64, 0.01, child_seed(5, 1), replicas=2)
    b = sample_fgn(0.75, 64, 0.01, child_seed(5, 1), replicas=2)
    c = sample_fgn(0.75, 64, 0.01, child_seed(5, 2), replicas=2)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        sample_fgn(0.75, 8, 0.1, -1)


@pytest.mark.parametrize("method", ["circulant", "cholesky"])
def test_fgn_covariance_matches(method):
    H, n, replicas = 0.75, 32, 20000
    x = sample_fgn(H, n, 1.0, 3, replicas=replicas, method=method)
    empirical = np.array([np.mean(x[:, : n - k] * x[:, k:]) for k in range(4)])
    exact = fgn_autocovariance(H, 4)
    # standard error of a lag product mean is below sqrt(2 / replicas) ~ 0.01
    assert np.allclose(empirical, exact, atol=0.05)


def test_fbm_path_starts_at_zero_and_scales():
    grid = UniformGrid.over(1.0, 128)
    path = fbm_path(0.75, grid, 1)
    assert path.values[0] == 0.0
    assert path.values.shape == (129,)
    paths = sample_fbm_paths(0.75, grid, 2, replicas=4000)
    assert paths.shape == (4000, 129)
    # Var(beta_1) = 1 with standard error sqrt(2 / 4000)
    assert np.var(paths[:, -1]) == pytest.approx(1.0, abs=0.1)


def test_qfbm_modes_scale_with_q(q4):
    grid = UniformGrid.over(1.0, 64)
    path = sample_qfbm(q4, 0.75, grid, 9, replicas=3000)
    assert path.values.shape == (65, 3000, 4)
    variances = np.var(path.values[-1], axis=0)
    assert np.allclose(variances / q4.lam, 1.0, atol=0.15)
    assert path.replica(0).values.shape == (65, 4)


def test_qfbm_modes_are_stable_when_adding_modes():
    grid = UniformGrid.over(1.0, 32)
    small = sample_qfbm(QSpec.power_law(2), 0.75, grid, 4)
    large = sample_qfbm(QSpec.power_law(5), 0.75, grid, 4)
    assert np.array_equal(small.values, large.values[:, :2])


def test_qfbm_path_must_start_at_zero():
    grid = UniformGrid.over(1.0, 2)
    with pytest.raises(ValueError):
        QfbmPath(grid, np.ones((3, 2)))
    with pytest.raises(ValueError):
        QfbmPath(grid, np.zeros((4, 2)))


@pytest.mark.parametrize("H", [0.3, 0.6, 0.75, 0.9])
def test_mvn_normalization_matches_closed_form(H):
    assert mvn_normalization(H) == pytest.approx(mvn_normalization_closed_form(H), rel=1e-5)


def test_history_horizon():
    assert resolve_history_horizon(0.5, 1.0, 0.5) == pytest.approx(75.0)
    horizon = resolve_history_horizon(0.75, 1.0, 0.5)
    assert horizon >= 75.0
    assert horizon / 75.0 == pytest.approx(2 ** round(np.log2(horizon / 75.0)))
    with pytest.raises(ValueError):
        resolve_history_horizon(0.75, 1.0, 0.0)


def _history(H=0.75, base=0.5, h=0.25, batch=(), seed=3):
    return build_noise_history(H, base, [h], seed, batch_shape=batch, future_step=h / 64)


def test_decomposition_reconstructs_increment():
    history = _history(batch=(50,))
    parts = decompose_increment(history, 0.75, 0.5, [0.25])
    direct = mvn_increment(history, 0.75, 0.5, 0.25)
    assert np.allclose(parts.total[0], direct, atol=1e-12)


def test_kernel_variance_matches_fbm_increment():
    H, h = 0.75, 0.25
    history = _history(H=H, h=h)
    full = kernel_weights(history, H, 0.5, h, "full")
    assert kernel_variance(history, full) == pytest.approx(h ** (2 * H), rel=0.03)
    smooth = kernel_variance(history, kernel_weights(history, H, 0.5, h, "smooth"))
    rough = kernel_variance(history, kernel_weights(history, H, 0.5, h, "rough"))
    assert 0 < smooth < h ** (2 * H)
    assert 0 < rough < h ** (2 * H)


def test_mvn_increment_variance_is_empirical_fbm():
    H, h = 0.75, 0.25
    history = _history(H=H, h=h, batch=(4000,), seed=8)
    samples = mvn_increment(history, H, 0.5, h)
    assert np.var(samples) == pytest.approx(h ** (2 * H), rel=0.1)


def test_smooth_part_derivative_matches_finite_difference():
    history = _history(batch=(3,))
    h, step = 0.1, 1e-5
    numeric = (smooth_part(history, 0.75, 0.5, [h + step]) - smooth_part(history, 0.75, 0.5, [h - step])) / (2 * step)
    analytic = smooth_part_derivative(history, 0.75, 0.5, [h])
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-8)
    with pytest.raises(ValueError):
        smooth_part_derivative(history, 0.75, 0.5, [h], order=3)


def test_kernel_weights_errors():
    history = _history()
    with pytest.raises(ValueError):
        kernel_weights(history, 0.75, 0.5, 0.0, "full")
    with pytest.raises(ValueError):
        kernel_weights(history, 0.75, 0.5, 0.25, "other")
    with pytest.raises(ValueError):
        decompose_increment(history, 0.75, 0.5, [1.0])
