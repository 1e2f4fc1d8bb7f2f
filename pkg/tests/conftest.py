"""Shared fixtures: small periodic grids and background pairs."""
import numpy as np
import pytest

from jeq.geom.core import Grid, HermitianField, PotentialField, ddc


@pytest.fixture
def grid1():
    return Grid(1, 16)


@pytest.fixture
def grid2():
    return Grid(2, 8)


@pytest.fixture
def flat_pair(grid2):
    omega = HermitianField.identity(grid2)
    return omega, omega


@pytest.fixture
def perturbed_pair(grid2):
    """ω flat, χ = ω + dd^c(0.05 cos x1)."""
    x1 = grid2.coordinates()[0]
    omega = HermitianField.identity(grid2)
    chi = omega + ddc(PotentialField(grid2, 0.05 * np.cos(x1)))
    return omega, chi


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def random_positive(rng, n, scale=1.0):
    """Random Hermitian positive definite n×n matrix."""
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (A @ A.conj().T / n + 0.5 * np.eye(n))
