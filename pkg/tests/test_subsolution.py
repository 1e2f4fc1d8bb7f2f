import numpy as np
import pytest

from conftest import random_positive
from jeq.errors import NonPositiveWeight
from jeq.geom.core import Grid, HermitianField, PotentialField
from jeq.geom.subsolution import (
    asymptotic_deviation,
    form_positivity_matrix,
    form_positivity_slack,
    path_subsolution_check,
    slack_profile,
    subsolution_slack,
)


def test_flat_pair_slack(flat_pair):
    report = subsolution_slack(*flat_pair)
    assert np.isclose(report.delta_max, 1.0)
    assert report.strict


def test_curve_is_vacuous(grid1):
    omega = HermitianField.identity(grid1)
    report = subsolution_slack(omega, omega * 5.0)
    assert report.delta_max == np.inf
    assert report.strict


def test_non_strict_pair(grid2):
    omega = HermitianField.identity(grid2)
    chi = HermitianField.constant(grid2, np.diag([1.0, 2.0]))
    report = subsolution_slack(omega, chi)
    assert np.isclose(report.delta_max, 0.0)
    assert not report.strict


def test_perturbed_pair_matches_form_scan(perturbed_pair):
    omega, chi = perturbed_pair
    report = subsolution_slack(omega, chi)
    h = omega.grid.spacing[0]
    # χ has relative eigenvalues 1 and 1 + 0.0125 (sin h / h)² cos x1
    sup = 1.0 + 0.0125 * (np.sin(h) / h) ** 2
    assert np.isclose(report.delta_max, 2.0 / sup - 1.0)
    point = report.worst_point
    scanned = form_positivity_slack(omega.values[point], chi.values[point], step=1e-3)
    assert 0.0 <= report.delta_max - scanned <= 1e-3 + 1e-12



def test_slack_is_scale_invariant(perturbed_pair, rng):
    omega, chi = perturbed_pair
    report = subsolution_slack(omega, chi)
    for c in (0.1, 3.0, rng.uniform(0.5, 50.0)):
        scaled = subsolution_slack(omega * c, chi * c)
        assert np.isclose(scaled.delta_max, report.delta_max, rtol=1e-12)
        assert scaled.strict == report.strict

def test_eigenvalue_criterion_agrees_with_form_scan(rng):
    grid = Grid(2, 8)
    for _ in range(100):
        omega_pt = random_positive(rng, 2)
        chi_pt = random_positive(rng, 2, scale=0.6)
        report = subsolution_slack(HermitianField.constant(grid, omega_pt),
                                   HermitianField.constant(grid, chi_pt))
        scanned = form_positivity_slack(omega_pt, chi_pt, step=1e-3)
        if report.delta_max < 0:
            assert scanned == -1e-3
        elif report.delta_max < 10.0:
            assert abs(report.delta_max - scanned) <= 1e-3 + 1e-12


def test_form_matrix_flat():
    # χ = ω on C²: M = (1 − (1+δ)/2)·I
    M = form_positivity_matrix(np.eye(2), np.eye(2), delta=0.0)
    assert np.allclose(M, 0.5 * np.eye(2))
    M = form_positivity_matrix(np.eye(2), np.eye(2), delta=1.0)
    assert np.allclose(M, 0.0)


def test_slack_profile_monotone(perturbed_pair):
    omega, chi = perturbed_pair
    ts = np.linspace(0.0, 1.0, 11)
    profile = slack_profile(omega, chi, ts)
    assert np.isclose(profile[0], 1.0)
    assert np.all(np.diff(profile) <= 1e-12)
    assert path_subsolution_check(omega, chi, 0.5, 0.9)
    with pytest.raises(ValueError):
        path_subsolution_check(omega, chi, 1.5, 0.1)


def test_asymptotic_deviation(grid2):
    omega = HermitianField.identity(grid2)
    x1 = grid2.coordinates()[0]
    rho = PotentialField(grid2, 2.0 + np.cos(x1))
    assert asymptotic_deviation(omega, omega, rho, eta=1.0) == 0.0
    chi = omega * 0.5
    # ω^n / (ω^{n−1}∧χ) = 2 against C = 1, weighted by sup ρ = 3
    assert np.isclose(asymptotic_deviation(omega, chi, rho, eta=1.0), 3.0)
    with pytest.raises(NonPositiveWeight):
        asymptotic_deviation(omega, chi, rho - 5.0, eta=1.0)
    with pytest.raises(ValueError):
        asymptotic_deviation(omega, chi, rho, eta=-1.0)


if __name__ == "__main__":
    test_form_matrix_flat()
