import numpy as np
import pytest

from jeq.errors import NonPositiveDensity, NonPositiveMetric, NotNormalized
from jeq.geom.core import HermitianField, PotentialField
from jeq.models.functionals import (
    energy_E,
    energy_ET,
    energy_first_variation,
    entropy,
    k_energy,
)


def random_potential(grid, rng, amplitude=0.05, z1_only=False):
    coordinates = grid.coordinates()
    x1, y1 = coordinates[:2]
    a = rng.uniform(-amplitude, amplitude, size=3)
    values = a[0] * np.cos(x1) + a[1] * np.sin(x1 + y1) + a[2] * np.cos(2 * y1)
    if grid.n > 1 and not z1_only:
        values = values + a[0] * np.sin(coordinates[2] - coordinates[3])
    return PotentialField(grid, values)


def test_entropy_two_cells():
    H = entropy([0.5, 0.5], [0.25, 0.75])
    assert abs(H - (0.5 * np.log(2) + 0.5 * np.log(2 / 3))) <= 1e-12
    assert entropy([0.5, 0.5], [0.5, 0.5]) == 0.0
    with pytest.raises(NotNormalized):
        entropy([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(NonPositiveDensity):
        entropy([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        entropy([1.0], [0.5, 0.5])


def test_first_variation_on_a_curve(grid1, rng):
    omega = HermitianField.identity(grid1)
    phi = random_potential(grid1, rng)
    gradient = energy_first_variation(phi, omega)
    omega_phi = HermitianField.from_potential(omega, phi)
    expected = 2 * omega_phi.determinant() * grid1.cell_volume
    assert np.allclose(gradient, expected, atol=1e-12)


def test_first_variation_on_a_surface(grid2, rng):
    omega = HermitianField.identity(grid2)
    phi = random_potential(grid2, rng, z1_only=True)
    gradient = energy_first_variation(phi, omega)
    omega_phi = HermitianField.from_potential(omega, phi)
    expected = 3 * omega_phi.determinant() * grid2.cell_volume
    assert np.allclose(gradient, expected, atol=1e-12)


def test_directional_derivative(grid2, rng):
    omega = HermitianField.identity(grid2)
    phi = random_potential(grid2, rng)
    psi = random_potential(grid2, rng, amplitude=1.0)
    step = 1e-5
    fd = (energy_E(phi + psi * step, omega)
          - energy_E(phi - psi * step, omega)) / (2 * step)
    exact = float(np.sum(energy_first_variation(phi, omega) * psi.values))
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_energy_T_on_a_curve(grid1, rng):
    omega = HermitianField.identity(grid1) * 1.5
    phi = random_potential(grid1, rng)
    omega_phi = HermitianField.from_potential(omega, phi)
    top = float(np.sum(phi.values * omega_phi.determinant())) * grid1.cell_volume
    assert np.isclose(energy_ET(phi, omega, omega), energy_E(phi, omega) - top,
                      atol=1e-12)
    # T given as a potential stands for its dd^c
    assert np.isclose(energy_ET(phi, omega, PotentialField.zeros(grid1)), 0.0)


def test_inadmissible_potential(grid1):
    x = grid1.coordinates()[0]
    phi = PotentialField(grid1, 10 * np.cos(x))
    with pytest.raises(NonPositiveMetric):
        energy_E(phi, HermitianField.identity(grid1))


def test_k_energy_on_flat_background(grid2, rng):
    omega = HermitianField.identity(grid2)
    for _ in range(10):
        phi = random_potential(grid2, rng)
        report = k_energy(phi, omega)
        assert report.mean_scalar_curvature == 0.0
        assert abs(report.E_ric) <= 1e-14
        assert report.H >= 0.0
        assert abs(report.M - report.H) <= 1e-12
        recomposed = (report.mean_scalar_curvature / 3 * report.E - report.E_ric
                      + report.H)
        assert abs(report.M - recomposed) <= 1e-12
        assert np.isnan(report.E_T)
        assert np.isclose(report.volume, (2 * np.pi) ** 4)


def test_k_energy_with_curved_background(grid1):
    x, y = grid1.coordinates()
    omega = HermitianField(grid1, np.exp(0.1 * np.cos(x) * np.cos(y))[..., None, None])
    phi = PotentialField(grid1, 0.02 * np.sin(x))
    report = k_energy(phi, omega, T=omega)
    assert len(report.row()) == len(report.HEADER)
    recomposed = report.mean_scalar_curvature / 2 * report.E - report.E_ric + report.H
    assert abs(report.M - recomposed) <= 1e-12


if __name__ == "__main__":
    test_entropy_two_cells()
