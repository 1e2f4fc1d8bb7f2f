"""Discrete complex geometry on periodic grids.

Coordinates are z_k = x_{2k-1} + i x_{2k}, k = 1..n, so a grid of complex dimension
n has 2n real axes ordered (x_1, y_1, x_2, y_2, ...). Matrix fields store the
components g_{ij̄} of a real (1,1)-form in the last two axes.
"""
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np
from loguru import logger

from jeq.errors import NonPositiveMetric


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the real 2n-torus.

    Args:
        n: complex dimension (1 <= n <= 3).
        N: points per real axis (even, >= 8).
        periods: the 2n real periods, 2π each by default.
    """
    n: int
    N: int
    periods: tuple = None

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise ValueError(f"complex dimension must be in [1, 3], got {self.n}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"points per axis must be even and >= 8, got {self.N}")
        periods = self.periods
        if periods is None:
            periods = (2 * np.pi,) * (2 * self.n)
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 * self.n or min(periods) <= 0:
            raise ValueError(f"expected {2 * self.n} positive periods, got {periods}")
        object.__setattr__(self, "periods", periods)

    @property
    def shape(self) -> tuple:
        return (self.N,) * (2 * self.n)

    @property
    def size(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def spacing(self) -> tuple:
        return tuple(p / self.N for p in self.periods)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coordinates(self) -> list:
        """Real coordinate arrays x_1, ..., x_{2n} evaluated on the grid."""
        axes = [np.arange(self.N) * h for h in self.spacing]
        return np.meshgrid(*axes, indexing="ij")


def _freeze(values: np.ndarray) -> np.ndarray:
    values = np.array(values, copy=True)
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class PotentialField:
    """Real scalar function sampled on a grid."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("potential has non-finite entries")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def zeros(cls, grid: Grid) -> "PotentialField":
        return cls(grid, np.zeros(grid.shape))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def oscillation(self) -> float:
        return float(np.max(self.values) - np.min(self.values))

    def mean_zero(self) -> "PotentialField":
        return PotentialField(self.grid, self.values - np.mean(self.values))

    def __add__(self, other):
        other = other.values if isinstance(other, PotentialField) else other
        return PotentialField(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, PotentialField) else other
        return PotentialField(self.grid, self.values - other)

    def __mul__(self, scalar: float):
        return PotentialField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return PotentialField(self.grid, -self.values)


@dataclass(frozen=True)
class HermitianField:
    """Field of n×n Hermitian matrices g_{ij̄}.

    The values are projected onto the Hermitian part on construction, so
    g_{ij̄} = conj(g_{jī}) holds exactly.
    """
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.grid.n
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape + (n, n):
            expected = self.grid.shape + (n, n)
            raise ValueError(f"expected shape {expected}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix field has non-finite entries")
        values = 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def constant(cls, grid: Grid, matrix) -> "HermitianField":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(grid, np.broadcast_to(matrix, grid.shape + matrix.shape))

    @classmethod
    def identity(cls, grid: Grid) -> "HermitianField":
        return cls.constant(grid, np.eye(grid.n))

    @classmethod
    def from_potential(cls, base: "HermitianField",
                       phi: PotentialField) -> "HermitianField":
        """ω_φ = ω + dd^c φ."""
        return base + ddc(phi)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.values)

    def min_eigenvalue(self) -> float:
        return float(np.min(self.eigenvalues()))

    def determinant(self) -> np.ndarray:
        return np.linalg.det(self.values).real

    def hermitian_error(self) -> float:
        adjoint = np.conj(np.swapaxes(self.values, -1, -2))
        return float(np.max(np.abs(self.values - adjoint)))

    def __add__(self, other: "HermitianField") -> "HermitianField":
        return HermitianField(self.grid, self.values + other.values)

    def __sub__(self, other: "HermitianField") -> "HermitianField":
        return HermitianField(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "HermitianField":
        # scalar may also be a real per-point array of the grid shape
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim:
            scalar = scalar[..., None, None]
        return HermitianField(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TraceDiagnostics:
    tr_min: float
    tr_max: float
    eig_min: float
    eig_max: float
    residual_sup: float


# stencils ---------------------------------------------------------------------

def central_difference(values, axis: int, h: float, xp=np):
    """Second-order central first difference along a periodic axis."""
    return (xp.roll(values, -1, axis=axis) - xp.roll(values, 1, axis=axis)) / (2.0 * h)


def ddc_array(values, spacing: tuple, n: int, xp=np):
    """Matrix of ∂²φ/∂z_i∂z̄_j built from products of central differences.

    ∂_{z_i}∂_{z̄_j} = ¼[(∂x_i∂x_j + ∂y_i∂y_j) + i(∂x_i∂y_j − ∂y_i∂x_j)]. All entries
    come from the same commuting skew-adjoint operators, which keeps Σ det(ω + dd^c φ)
    independent of φ on the torus. `xp` may be numpy or jax.numpy.
    """
    first = [central_difference(values, a, spacing[a], xp) for a in range(2 * n)]
    rows = []
    for i in range(n):
        xi, yi = 2 * i, 2 * i + 1
        row = []
        for j in range(n):
            xj, yj = 2 * j, 2 * j + 1
            real = (central_difference(first[xj], xi, spacing[xi], xp)
                    + central_difference(first[yj], yi, spacing[yi], xp))
            imag = (central_difference(first[yj], xi, spacing[xi], xp)
                    - central_difference(first[xj], yi, spacing[yi], xp))
            row.append(0.25 * (real + 1j * imag))
        rows.append(xp.stack(row, axis=-1))
    out = xp.stack(rows, axis=-2)
    return 0.5 * (out + xp.conj(xp.swapaxes(out, -1, -2)))


def ddc(phi: PotentialField) -> HermitianField:
    """Discrete dd^c of a potential (complex Hessian ∂²φ/∂z_i∂z̄_j)."""
    grid = phi.grid
    return HermitianField(grid, ddc_array(phi.values, grid.spacing, grid.n))


def first_derivatives(phi: PotentialField) -> np.ndarray:
    """Complex derivatives ∂φ/∂z_k = ½(∂_x − i∂_y)φ, stacked in the last axis."""
    grid = phi.grid
    h = grid.spacing
    out = [0.5 * (central_difference(phi.values, 2 * k, h[2 * k])
                  - 1j * central_difference(phi.values, 2 * k + 1, h[2 * k + 1]))
           for k in range(grid.n)]
    return np.stack(out, axis=-1)


# pointwise algebra ------------------------------------------------------------

def require_positive(metric: HermitianField, name: str = "metric",
                     floor: float = 0.0) -> np.ndarray:
    """Return the eigenvalues of `metric`.

    Raises NonPositiveMetric if any eigenvalue is <= floor.
    """
    eig = metric.eigenvalues()
    lowest = eig[..., 0]
    if not np.all(lowest > floor):
        point = np.unravel_index(np.argmin(lowest), lowest.shape)
        value = float(lowest[point])
        where = tuple(int(p) for p in point)
        raise NonPositiveMetric(
            f"{name} is not positive: eigenvalue {value:.3e} at {where}",
            point=where, value=value)
    return eig


def trace_ratio(omega_phi: HermitianField, chi: HermitianField) -> PotentialField:
    """Pointwise tr_{ω_φ}χ = g_φ^{ij̄}χ_{ij̄}."""
    require_positive(omega_phi, "omega_phi")
    solved = np.linalg.solve(omega_phi.values, chi.values)
    return PotentialField(omega_phi.grid, np.trace(solved, axis1=-2, axis2=-1).real)


def generalized_eigenvalues(chi: HermitianField, omega: HermitianField) -> np.ndarray:
    """Eigenvalues of χ relative to ω, sorted ascending in the last axis.

    Uses the Cholesky factor L of ω and the Hermitian eigenproblem of L^{-1}χL^{-H}.
    """
    require_positive(omega, "omega")
    lower = np.linalg.cholesky(omega.values)
    half = np.linalg.solve(lower, chi.values)
    congruent = np.conj(np.swapaxes(
        np.linalg.solve(lower, np.conj(np.swapaxes(half, -1, -2))), -1, -2))
    congruent = 0.5 * (congruent + np.conj(np.swapaxes(congruent, -1, -2)))
    return np.linalg.eigvalsh(congruent)


def ricci(omega: HermitianField) -> HermitianField:
    """Ric(ω) = −dd^c log det g, with the dd^c stencil."""
    require_positive(omega, "omega")
    grid = omega.grid
    log_det = np.log(omega.determinant())
    return HermitianField(grid, -ddc_array(log_det, grid.spacing, grid.n))


def scalar_curvature(omega: HermitianField) -> PotentialField:
    return trace_ratio(omega, ricci(omega))


def mixed_discriminant(matrices: list, xp=np):
    """Mixed discriminant D(A_1, ..., A_n) of n stacks of n×n matrices.

    Normalized so that D(A, ..., A) = det A, computed by column polarization:
    D = (1/n!) Σ_σ det[A_{σ(1)} e_1, ..., A_{σ(n)} e_n].
    """
    n = len(matrices)
    total = 0.0
    for sigma in permutations(range(n)):
        columns = [matrices[sigma[k]][..., :, k] for k in range(n)]
        total = total + xp.linalg.det(xp.stack(columns, axis=-1))
    return total / factorial(n)


def wedge_ratio(omega: HermitianField, chi: HermitianField, k: int = 1) -> np.ndarray:
    """Pointwise (ω^{n−k}∧χ^k)/ω^n from the determinant expansion."""
    n = omega.grid.n
    if not 0 <= k <= n:
        raise ValueError(f"wedge power must be in [0, {n}], got {k}")
    require_positive(omega, "omega")
    mixed = mixed_discriminant([omega.values] * (n - k) + [chi.values] * k)
    return (mixed / np.linalg.det(omega.values)).real


def volume_density(omega: HermitianField) -> np.ndarray:
    """ω^n as a density against the coordinate volume (normalized wedge: det g)."""
    return omega.determinant()


def integrate(values, grid: Grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


def trace_diagnostics(omega_phi: HermitianField, chi: HermitianField,
                      residual: PotentialField = None) -> TraceDiagnostics:
    eig = require_positive(omega_phi, "omega_phi")
    trace = trace_ratio(omega_phi, chi).values
    residual_sup = 0.0 if residual is None else residual.sup()
    diagnostics = TraceDiagnostics(tr_min=float(trace.min()), tr_max=float(trace.max()),
                                   eig_min=float(eig[..., 0].min()),
                                   eig_max=float(eig[..., -1].max()),
                                   residual_sup=residual_sup)
    logger.debug(f"trace diagnostics: {diagnostics}")
    return diagnostics
