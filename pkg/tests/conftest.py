"""Shared fixtures: small generators, Q covariances and seeded fBm paths."""

import numpy as np
import pytest

from fbm import QSpec, UniformGrid, fbm_path, sample_qfbm
from spectral_core import DiagonalGenerator


@pytest.fixture
def gen8():
    return DiagonalGenerator.laplacian_shifted(8)


@pytest.fixture
def q4():
    return QSpec.power_law(4, 1.5)


@pytest.fixture
def grid256():
    return UniformGrid.over(1.0, 256)


@pytest.fixture
def fbm075(grid256):
    return fbm_path(0.75, grid256, 7)


@pytest.fixture
def qfbm075(q4, grid256):
    return sample_qfbm(q4, 0.75, grid256, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
