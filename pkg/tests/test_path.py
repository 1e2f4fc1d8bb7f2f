import numpy as np
import pytest

from jeq.errors import NewtonStalled
from jeq.geom.core import Grid, HermitianField, PotentialField, ddc, wedge_ratio
from jeq.opt.path import (
    PathConfig,
    discrete_pairing,
    discrete_volume,
    linearized_apply,
    march_path,
    newton_solve,
    normalize_pair,
    residual,
    richardson_zero,
)


def smooth_potential(grid, rng, amplitude=0.02):
    x1, y1, x2, y2 = grid.coordinates()
    a = rng.uniform(-amplitude, amplitude, size=4)
    return PotentialField(grid, a[0] * np.cos(x1 + y2) + a[1] * np.sin(y1)
                          + a[2] * np.cos(x2) * np.sin(x1) + a[3] * np.sin(y1 - y2))


def test_config_validation():
    with pytest.raises(ValueError):
        PathConfig(eps0=0.1, eps_floor=0.2)
    with pytest.raises(ValueError):
        PathConfig(t_step=0.0)
    with pytest.raises(ValueError):
        PathConfig(backtrack=1.0)


def test_normalize_pair(grid2):
    omega = HermitianField.identity(grid2) * 2.0
    chi = HermitianField.identity(grid2)
    omega_n, chi_n, C = normalize_pair(omega, chi)
    assert np.isclose(C, 2.0)
    assert np.isclose(discrete_volume(omega_n), 1.0)
    assert np.isclose(discrete_pairing(omega_n, chi_n), 1.0)


def generic_pair(N):
    grid = Grid(2, N)
    x1, y1, x2, y2 = grid.coordinates()
    A = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    omega = HermitianField.constant(grid, A) + ddc(
        PotentialField(grid, 0.05 * np.cos(x1 + y2) + 0.03 * np.sin(y1)))
    chi = HermitianField.constant(grid, np.diag([1.0, 3.0])) + ddc(
        PotentialField(grid, 0.05 * np.sin(x2) * np.cos(x1)))
    return omega, chi


def test_normalize_generic_pair():
    # C = det A / D(A, B) = 2 / tr(A⁻¹B) = 1/2 for the constant parts
    omega, chi = generic_pair(8)
    _, _, C = normalize_pair(omega, chi)
    _, _, C_fine = normalize_pair(*generic_pair(16))
    assert abs(C - C_fine) <= 1e-8
    assert abs(C - 0.5) <= 1e-8
    omega_n, chi_n, _ = normalize_pair(omega, chi)
    assert np.isclose(discrete_volume(omega_n), 1.0, rtol=1e-12)
    assert np.isclose(discrete_pairing(omega_n, chi_n), 1.0, rtol=1e-12)

def test_residual_matches_log_form(perturbed_pair, rng):
    omega, chi = perturbed_pair
    grid = omega.grid
    phi = smooth_potential(grid, rng)
    eps, t = 0.1, 0.7
    res = residual(phi, eps, t, omega, chi).values
    omega_phi = omega + ddc(phi)
    chi_t = chi * t + omega * (1 - t)
    log_form = -np.log(wedge_ratio(omega_phi, chi_t, 1)) - eps * phi.values
    target = grid.n * np.exp(-eps * phi.values)
    # the form ratio ω_φ^n/(ω_φ^{n−1}∧χ_t) is n/tr
    assert np.allclose(log_form, np.log(grid.n / (res + target)) - eps * phi.values,
                       atol=1e-10)


def test_linearization_finite_difference(perturbed_pair, rng):
    omega, chi = perturbed_pair
    grid = omega.grid
    eps, t, step = 0.1, 0.5, 1e-5
    phi = smooth_potential(grid, rng)
    for _ in range(20):
        u = smooth_potential(grid, rng, amplitude=1.0)
        plus = residual(phi + u * step, eps, t, omega, chi).values
        minus = residual(phi - u * step, eps, t, omega, chi).values
        fd = (plus - minus) / (2 * step)
        Lu = linearized_apply(u, phi, eps, t, omega, chi).values
        assert np.max(np.abs(fd + Lu)) <= 1e-6 * np.max(np.abs(Lu))


def test_linearization_divergence_form(grid2, rng):
    omega = HermitianField.identity(grid2)
    chi = HermitianField.constant(grid2, np.diag([1.5, 0.5]))
    u = smooth_potential(grid2, rng, amplitude=1.0) + 3.0
    Lu = linearized_apply(u, PotentialField.zeros(grid2), 0.0, 1.0, omega, chi)
    assert abs(Lu.mean()) < 1e-12


def test_newton_converges_and_is_unique(perturbed_pair):
    omega, chi = perturbed_pair
    config = PathConfig(newton_tol=1e-10)
    state = newton_solve(PotentialField.zeros(omega.grid), 0.1, 1.0, omega, chi, config)
    assert state.residual_sup <= 1e-10
    x2 = omega.grid.coordinates()[2]
    start = PotentialField(omega.grid, 0.01 * np.cos(x2))
    other = newton_solve(start, 0.1, 1.0, omega, chi, config)
    assert np.max(np.abs(state.phi.values - other.phi.values)) <= 1e-6
    # the converged potential is a fixed point of the trace equation
    trace = (residual(state.phi, 0.1, 1.0, omega, chi).values
             + 2 * np.exp(-0.1 * state.phi.values))
    assert np.allclose(-np.log(trace / 2) / 0.1, state.phi.values, atol=1e-6)


def test_newton_rejects_inadmissible_start(perturbed_pair):
    omega, chi = perturbed_pair
    x1 = omega.grid.coordinates()[0]
    with pytest.raises(NewtonStalled):
        newton_solve(PotentialField(omega.grid, 10 * np.cos(x1)), 0.1, 0.0, omega, chi)


def test_trivial_path_stays_at_zero():
    omega = HermitianField.identity(Grid(2, 16))
    config = PathConfig(eps0=0.5, eps_floor=0.0625, t_step=0.5)
    result = march_path(omega, omega, config)
    assert all(r.phi_sup <= 1e-10 for r in result.records)
    assert result.eps_levels == [0.5, 0.25, 0.125, 0.0625]
    assert result.delta0_ok
    assert np.allclose(result.extrapolated.values, 0.0)


def test_perturbed_path(perturbed_pair):
    omega, chi = perturbed_pair
    config = PathConfig(eps0=0.5, eps_floor=0.0625, t_step=0.25, newton_tol=1e-10)
    result = march_path(omega, chi, config)
    assert result.final.t == 1.0
    assert result.final.eps == 0.0625
    assert result.final.residual_sup <= 1e-9
    assert result.extrapolation_order == 2
    assert result.delta0_ok
    assert all(r.volume_drift <= 1e-12 for r in result.records)
    assert abs(result.extrapolated.mean()) < 1e-12
    ts = [r.t for r in result.records if r.phase == "t"]
    assert ts == [0.0, 0.25, 0.5, 0.75, 1.0]


@pytest.mark.slow
def test_two_schedules_agree():
    grid = Grid(2, 16)
    x1, _, x2, _ = grid.coordinates()
    omega = HermitianField.identity(grid)
    chi = omega + ddc(PotentialField(grid, 0.05 * (np.cos(x1) + np.sin(x2))))
    omega, chi, _ = normalize_pair(omega, chi)
    first = march_path(omega, chi, PathConfig(eps0=0.5, eps_floor=0.0625, t_step=0.25))
    second = march_path(omega, chi, PathConfig(eps0=0.5, eps_floor=0.0625, t_step=1.0))
    assert first.final.residual_sup <= 1e-9
    difference = (first.final.phi.mean_zero() - second.final.phi.mean_zero()).sup()
    assert difference <= 1e-6



@pytest.mark.slow
def test_solution_is_uniform_in_eps():
    grid = Grid(2, 16)
    x1, _, x2, _ = grid.coordinates()
    omega = HermitianField.identity(grid)
    chi = omega + ddc(PotentialField(grid, 0.05 * (np.cos(x1) + np.sin(x2))))
    omega, chi, _ = normalize_pair(omega, chi)
    result = march_path(omega, chi, PathConfig(eps0=0.5, eps_floor=0.0625))
    at_one = [r for r in result.records if r.t == 1.0]
    assert [r.eps for r in at_one] == [0.5, 0.25, 0.125, 0.0625]
    sups = np.array([r.phi_sup for r in at_one[1:]])
    assert (sups.max() - sups.min()) / sups.max() <= 0.05
    assert result.delta0_ok
    assert all(r.eps_phi_sup < 0.1 for r in result.records)

def test_richardson_exact_on_quadratics(grid1):
    base = np.cos(grid1.coordinates()[0])
    eps = [0.5, 0.25, 0.125]
    samples = [base * (1 + 2 * e - 3 * e ** 2) for e in eps]
    assert np.allclose(richardson_zero(eps, samples), base)


if __name__ == "__main__":
    test_config_validation()
