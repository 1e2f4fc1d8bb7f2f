"""J-equation on a divisor that is a curve (flat torus model of D).

On a curve ω_ψ = ω_D + dd^c ψ is a scalar density and tr_{ω_ψ}χ_D = c is the linear
Poisson problem dd^c ψ = χ_D/c − ω_D.
"""
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.sparse.linalg import LinearOperator, cg

from jeq.errors import LinearSolveFailed, SolvabilityViolated
from jeq.geom.core import HermitianField, PotentialField, ddc_array, require_positive


@dataclass(frozen=True)
class DivisorSolution:
    psi: PotentialField
    c: float
    residual_sup: float
    cg_iterations: int


def _density(field: HermitianField) -> np.ndarray:
    if field.grid.n != 1:
        raise ValueError(
            f"divisor fields live on a curve (n = 1), got n = {field.grid.n}")
    return field.values[..., 0, 0].real


def curve_j_constant(omega_D: HermitianField, chi_D: HermitianField) -> float:
    """c = ∫χ_D / ∫ω_D, the only constant for which the curve equation is solvable."""
    require_positive(omega_D, "omega_D")
    require_positive(chi_D, "chi_D")
    return float(np.sum(_density(chi_D)) / np.sum(_density(omega_D)))


def _parity_means(values: np.ndarray) -> np.ndarray:
    # kernel of the composed central stencil: constants on each of the 4 parity classes
    return np.array([[np.mean(values[px::2, py::2]) for py in (0, 1)] for px in (0, 1)])


def _project_kernel(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    means = _parity_means(out)
    for px in (0, 1):
        for py in (0, 1):
            out[px::2, py::2] -= means[px, py]
    return out


def solve_poisson_on_D(omega_D: HermitianField, chi_D: HermitianField, c: float,
                       perturb: str = "omega", rtol: float = 1e-12,
                       solvability_tol: float = 1e-8) -> DivisorSolution:
    """Solve the curve J-equation for a mean-zero potential ψ.

    Args:
        omega_D, chi_D: area forms on the flat torus D (n = 1 fields).
        c: the J-constant; must match curve_j_constant.
        perturb: "omega" solves tr_{ω_D + dd^c ψ}χ_D = c, "chi" solves
            tr_{ω_D}(χ_D + dd^c ψ) = c.
    """
    c_quad = curve_j_constant(omega_D, chi_D)
    if abs(c - c_quad) > solvability_tol:
        raise SolvabilityViolated(f"constant {c:.12g} does not match the quadrature "
                                  f"constant {c_quad:.12g}")
    omega, chi = _density(omega_D), _density(chi_D)
    if perturb == "omega":
        rhs = chi / c - omega
    elif perturb == "chi":
        rhs = c * omega - chi
    else:
        raise ValueError(f"unknown perturbation target {perturb!r}")
    grid = omega_D.grid
    shape, size = grid.shape, grid.size
    kernel_mass = float(np.max(np.abs(_parity_means(rhs) - np.mean(rhs))))
    if kernel_mass > solvability_tol:
        raise SolvabilityViolated(
            f"right-hand side has a parity-class component of size {kernel_mass:.3e} "
            "outside the range of dd^c")
    target = rhs
    rhs = _project_kernel(rhs)

    def laplacian(v):
        return ddc_array(np.reshape(v, shape), grid.spacing, 1)[..., 0, 0].real

    # −dd^c is symmetric positive semidefinite
    A = LinearOperator((size, size), matvec=lambda v: -laplacian(v).reshape(-1),
                       dtype=float)
    iterations = []
    psi, info = cg(A, -rhs.reshape(-1), rtol=rtol, maxiter=10 * size,
                   callback=iterations.append)
    if info != 0:
        raise LinearSolveFailed(f"CG did not converge on D, info={info}")
    psi = _project_kernel(psi.reshape(shape))
    psi -= np.mean(psi)
    residual = float(np.max(np.abs(laplacian(psi) - target)))
    if residual > 1e-10:
        logger.warning(f"Poisson residual on D is {residual:.3e}")
    logger.debug(f"Poisson on D: c = {c:.10g}, {len(iterations)} CG iterations, "
                 f"residual {residual:.3e}")
    return DivisorSolution(psi=PotentialField(grid, psi), c=float(c),
                           residual_sup=residual, cg_iterations=len(iterations))
