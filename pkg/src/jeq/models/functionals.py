"""Energy functionals on the torus model and the K-energy decomposition.

The sums of mixed wedges are evaluated with jax so that first variations come from
`jax.grad`. Wedges are normalized, ω^n ↔ det ω and ω_φ^{n−j}∧ω^j ↔ D(ω_φ^{n−j}, ω^j).
"""
from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np
from jax import grad, jit
from loguru import logger

from jeq.errors import NonPositiveDensity, NotNormalized
from jeq.geom.core import (
    HermitianField,
    PotentialField,
    ddc,
    ddc_array,
    mixed_discriminant,
    require_positive,
    ricci,
    scalar_curvature,
)

jax.config.update("jax_enable_x64", True)


@dataclass(frozen=True)
class EnergyReport:
    """Energies of one state φ against the background ω.

    M = (R̄/(n+1))·E − E_ric + H holds exactly for the stored parts.
    """
    E: float
    E_T: float
    H: float
    M: float
    mean_scalar_curvature: float
    E_ric: float
    volume: float

    HEADER = ("E", "E_T", "H", "M", "mean_scalar_curvature", "E_ric", "volume")

    def row(self) -> list:
        return [self.E, self.E_T, self.H, self.M, self.mean_scalar_curvature,
                self.E_ric, self.volume]


@partial(jit, static_argnums=(2, 3))
def _energy(phi, omega, spacing, n):
    omega_phi = omega + ddc_array(phi, spacing, n, xp=jnp)
    density = sum(mixed_discriminant([omega_phi] * (n - j) + [omega] * j, xp=jnp)
                  for j in range(n + 1))
    return jnp.sum(phi * density.real)


@partial(jit, static_argnums=(3, 4))
def _energy_T(phi, omega, T, spacing, n):
    omega_phi = omega + ddc_array(phi, spacing, n, xp=jnp)
    density = sum(
        mixed_discriminant([omega_phi] * (n - 1 - j) + [omega] * j + [T], xp=jnp)
        for j in range(n))
    return jnp.sum(phi * density.real)


_energy_gradient = jit(grad(_energy), static_argnums=(2, 3))


def _admissible(phi: PotentialField, omega: HermitianField) -> None:
    require_positive(omega, "omega")
    require_positive(HermitianField.from_potential(omega, phi), "omega_phi")


def energy_E(phi: PotentialField, omega: HermitianField) -> float:
    """Σ_x φ Σ_{j=0}^n (ω_φ^{n−j}∧ω^j) dV."""
    _admissible(phi, omega)
    grid = phi.grid
    value = _energy(jnp.asarray(phi.values), jnp.asarray(omega.values), grid.spacing,
                    grid.n)
    return float(value) * grid.cell_volume


def energy_first_variation(phi: PotentialField, omega: HermitianField) -> np.ndarray:
    """Gradient of energy_E with respect to the grid values of φ.

    Pointwise it equals (n+1)·det(ω_φ)·dV.
    """
    _admissible(phi, omega)
    grid = phi.grid
    gradient = _energy_gradient(jnp.asarray(phi.values), jnp.asarray(omega.values),
                                grid.spacing, grid.n)
    return np.asarray(gradient) * grid.cell_volume


def energy_ET(phi: PotentialField, omega: HermitianField, T) -> float:
    """Σ_x φ Σ_{j=0}^{n−1} (ω_φ^{n−1−j}∧ω^j∧T) dV.

    T is a HermitianField or a PotentialField f standing for dd^c f. A non-constant
    matrix field cannot be certified closed and is accepted with a warning.
    """
    _admissible(phi, omega)
    if isinstance(T, PotentialField):
        T = ddc(T)
    elif np.ptp(T.values.real) + np.ptp(T.values.imag) > 0:
        logger.warning("energy_ET: T is not dd^c-generated; closedness is not verified")
    grid = phi.grid
    value = _energy_T(jnp.asarray(phi.values), jnp.asarray(omega.values),
                      jnp.asarray(T.values), grid.spacing, grid.n)
    return float(value) * grid.cell_volume


def entropy(mu, mu0, cell_volume: float = 1.0, tol: float = 1e-8) -> float:
    """Relative entropy Σ log(μ/μ₀) μ dV of two normalized densities."""
    mu = np.asarray(mu, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    if mu.shape != mu0.shape:
        raise ValueError(f"density shapes differ: {mu.shape} vs {mu0.shape}")
    if np.any(mu <= 0) or np.any(mu0 <= 0):
        raise NonPositiveDensity("densities must be positive")
    for name, density in (("mu", mu), ("mu0", mu0)):
        mass = float(np.sum(density)) * cell_volume
        if abs(mass - 1.0) > tol:
            raise NotNormalized(f"{name} has total mass {mass:.12g}")
    return float(np.sum(np.log(mu / mu0) * mu) * cell_volume)


def k_energy(phi: PotentialField, omega: HermitianField, T=None) -> EnergyReport:
    """K-energy M = (R̄/(n+1))·E − E^{Ric(ω)} + H_{ω^n}(ω_φ^n).

    R̄ is the grid mean of the scalar curvature of ω. The volume forms entering H are
    normalized to probability densities.
    """
    grid = phi.grid
    n = grid.n
    omega_phi = HermitianField.from_potential(omega, phi)
    E = energy_E(phi, omega)
    E_ric = energy_ET(phi, omega, ricci(omega))
    R_bar = float(np.mean(scalar_curvature(omega).values))
    volume = float(np.sum(omega.determinant())) * grid.cell_volume
    det_phi = omega_phi.determinant()
    det_0 = omega.determinant()
    mu = det_phi / (np.sum(det_phi) * grid.cell_volume)
    mu0 = det_0 / (np.sum(det_0) * grid.cell_volume)
    H = entropy(mu, mu0, grid.cell_volume)
    E_T = energy_ET(phi, omega, T) if T is not None else float("nan")
    M = R_bar / (n + 1) * E - E_ric + H
    report = EnergyReport(E=E, E_T=E_T, H=H, M=M, mean_scalar_curvature=R_bar,
                          E_ric=E_ric, volume=volume)
    logger.debug(f"energies: {report}")
    return report
