"""Fibered model of a Kähler metric near a smooth divisor D.

Near D the metric is modelled on [A, T] × D with the cusp coordinate t = −log(−log|z|²)
playing the role of the normal direction. For S¹-invariant potentials φ₀(t, ·) the fiber
coefficient of ω_φ in the dt∧η̃ direction is

    c(t) = a − ½(φ₀″ − φ₀′)

and the J-equation tr_{ω_φ}χ = n reduces to an ODE in t (Point D) or a PDE on [A, T] × D
(FlatTorus D, n = 2).
"""
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import NoConvergence, curve_fit, newton_krylov
from scipy.sparse.linalg import LinearOperator, splu

from jeq.errors import (DegenerateClass, FitDegenerate, MetricDegenerate, NewtonStalled,
                        NonPositiveWeight, TailFitFailed, WindowTooShort)
from jeq.geom.core import Grid, HermitianField, central_difference, ddc_array
from jeq.models.divisor import curve_j_constant, solve_poisson_on_D

CONVENTIONS = ("background", "greens")
_announced = set()


# geometry ---------------------------------------------------------------------

@dataclass(frozen=True)
class PointDivisor:
    """D collapsed to a point: only s = tr_{ω_D}χ_D enters."""
    s: float

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError(f"trace s must be positive, got {self.s}")


@dataclass(frozen=True)
class FlatTorusDivisor:
    """D a flat 2-torus with constant area forms.

    χ_D may carry the periodic perturbation χ_D·(1 + perturbation·cos x).
    """
    omega_D: float = 1.0
    chi_D: float = 1.0
    perturbation: float = 0.0
    N: int = 8

    def __post_init__(self):
        if self.omega_D <= 0 or self.chi_D <= 0:
            raise ValueError("omega_D and chi_D must be positive")
        if abs(self.perturbation) >= 1:
            raise ValueError(
                f"perturbation must be in (-1, 1), got {self.perturbation}")
        Grid(1, self.N)

    @property
    def grid(self) -> Grid:
        return Grid(1, self.N)

    def chi_field(self) -> np.ndarray:
        x = self.grid.coordinates()[0]
        return self.chi_D * (1.0 + self.perturbation * np.cos(x))

    def forms(self) -> tuple:
        grid = self.grid
        omega = HermitianField.constant(grid, [[self.omega_D]])
        chi = HermitianField(grid, self.chi_field()[..., None, None])
        return omega, chi

    @property
    def s(self) -> float:
        return curve_j_constant(*self.forms())

    def limit_potential(self) -> np.ndarray:
        """Mean-zero D-part of the limit profile: ω_D − dd^c_D f = χ_D / s."""
        omega, chi = self.forms()
        return -solve_poisson_on_D(omega, chi, self.s).psi.values


Divisor = Union[PointDivisor, FlatTorusDivisor]


@dataclass(frozen=True)
class CuspGeometry:
    """Truncated cusp model [A, T] × D.

    Args:
        n: complex dimension of the ambient manifold.
        a: fiber coefficient of the background, ω = p*ω_D + 2a e^{−t} dt∧η̃.
        b: fiber coefficient of χ.
        divisor: PointDivisor or FlatTorusDivisor (the latter needs n = 2).
        A, T: inner cut (>= 1) and outer truncation.
        Mt: number of t-grid points.
        chi_tail, chi_rate: χ's fiber coefficient is b + chi_tail·e^{−chi_rate·t}.
    """
    n: int
    a: float
    b: float
    divisor: Divisor
    A: float = 1.0
    T: float = 20.0
    Mt: int = 400
    chi_tail: float = 0.0
    chi_rate: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"the cusp model needs n >= 2, got {self.n}")
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if self.A < 1 or self.A >= self.T:
            raise ValueError(f"need 1 <= A < T, got A={self.A}, T={self.T}")
        if self.Mt < 16:
            raise ValueError(f"need at least 16 t-points, got {self.Mt}")
        if self.chi_rate <= 0:
            raise ValueError(f"chi_rate must be positive, got {self.chi_rate}")
        if isinstance(self.divisor, FlatTorusDivisor) and self.n != 2:
            raise ValueError("a flat torus divisor needs n = 2")

    @classmethod
    def from_classes(cls, n: int, b: float, C_D: float, a: float = None,
                     **kwargs) -> "CuspGeometry":
        """Point-divisor model from the class data (b, C_D).

        a defaults to background_coefficients(b, C_D, n); s is the limit value n − b/a.
        """
        if a is None:
            a = background_coefficients(b, C_D, n)
        logger.warning(f"identifying the background coefficient 2b/(n - C_D) with the "
                       f"fiber coefficient a = {a:.10g}")
        return cls(n=n, a=a, b=b, divisor=PointDivisor(n - b / a), **kwargs)

    @property
    def is_flat_torus(self) -> bool:
        return isinstance(self.divisor, FlatTorusDivisor)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.A, self.T, self.Mt)

    @property
    def h(self) -> float:
        return (self.T - self.A) / (self.Mt - 1)

    @property
    def s(self) -> float:
        return self.divisor.s

    @property
    def s_target(self) -> float:
        """Limit-equation value n − b/a of tr_{ω_D}χ_D."""
        return self.n - self.b / self.a

    @property
    def shape(self) -> tuple:
        if self.is_flat_torus:
            return (self.Mt,) + self.divisor.grid.shape
        return (self.Mt,)

    def b_t(self) -> np.ndarray:
        return self.b + self.chi_tail * np.exp(-self.chi_rate * self.t)


def background_coefficients(b: float, C_D: float, n: int) -> float:
    """a = 2b/(n − C_D), the fiber coefficient making ω^{n−1}∧χ/ω^n → 1."""
    if b <= 0:
        raise ValueError(f"b must be positive, got {b}")
    if C_D >= n:
        raise DegenerateClass(f"C_D = {C_D} must be < n = {n}")
    return 2 * b / (n - C_D)


def restricted_d_trace(n: int, C: float, a: float, b: float) -> float:
    """Class-level (ω_D^{n−2}∧χ_D)/ω_D^{n−1}, i.e. n/((n−1)C) − b/(a(n−1))."""
    if n < 2 or C <= 0 or a <= 0:
        raise ValueError("need n >= 2, C > 0 and a > 0")
    return n / ((n - 1) * C) - b / (a * (n - 1))


def background_deviation(geometry: CuspGeometry, eta: float) -> float:
    """sup_t |ω^n/(ω^{n−1}∧χ) − 1|·e^{ηt} for the model background on [A, T]."""
    if eta < 0:
        raise ValueError(f"growth exponent must be >= 0, got {eta}")
    t = geometry.t
    trace = geometry.b_t() / geometry.a + geometry.s
    if np.any(trace <= 0):
        raise NonPositiveWeight("background trace is not positive")
    return float(np.max(np.abs(geometry.n / trace - 1.0) * np.exp(eta * t)))


# stencils ---------------------------------------------------------------------

def _t_derivatives(phi: np.ndarray, h: float, right: str = "one-sided") -> tuple:
    """Second-order first and second t-derivatives along axis 0.

    The left end is one-sided; the right end is one-sided or uses the ghost value
    φ_{M} = φ_{M−2} of the Neumann condition φ′(T) = 0.
    """
    first = np.empty_like(phi)
    second = np.empty_like(phi)
    first[1:-1] = (phi[2:] - phi[:-2]) / (2 * h)
    second[1:-1] = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / h ** 2
    first[0] = (-3 * phi[0] + 4 * phi[1] - phi[2]) / (2 * h)
    second[0] = (2 * phi[0] - 5 * phi[1] + 4 * phi[2] - phi[3]) / h ** 2
    if right == "neumann":
        first[-1] = 0.0
        second[-1] = 2 * (phi[-2] - phi[-1]) / h ** 2
    elif right == "one-sided":
        first[-1] = (3 * phi[-1] - 4 * phi[-2] + phi[-3]) / (2 * h)
        second[-1] = (2 * phi[-1] - 5 * phi[-2] + 4 * phi[-3] - phi[-4]) / h ** 2
    else:
        raise ValueError(f"unknown right boundary {right!r}")
    return first, second


def _ddc_D(phi: np.ndarray, grid: Grid) -> np.ndarray:
    # D axes are 1 and 2; the stencil rolls axes 0 and 1, so t goes last
    moved = np.moveaxis(phi, 0, -1)
    return np.moveaxis(ddc_array(moved, grid.spacing, 1)[..., 0, 0].real, -1, 0)


def _gradient_D_squared(phi: np.ndarray, grid: Grid) -> np.ndarray:
    moved = np.moveaxis(phi, 0, -1)
    hx, hy = grid.spacing
    dz = 0.5 * (central_difference(moved, 0, hx)
                 - 1j * central_difference(moved, 1, hy))
    return np.moveaxis(np.abs(dz) ** 2, -1, 0)


def _check_shape(u: np.ndarray, geometry: CuspGeometry) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != geometry.shape:
        raise ValueError(f"expected a profile of shape {geometry.shape}, got {u.shape}")
    return u


def fiber_coefficient(phi0: np.ndarray, geometry: CuspGeometry,
                      right: str = "one-sided") -> np.ndarray:
    """c(t) = a − ½(φ₀″ − φ₀′) on the grid."""
    phi0 = _check_shape(phi0, geometry)
    first, second = _t_derivatives(phi0, geometry.h, right)
    return geometry.a - 0.5 * (second - first)


def _residual_terms(phi0: np.ndarray, geometry: CuspGeometry, right: str) -> tuple:
    n = geometry.n
    first, second = _t_derivatives(phi0, geometry.h, right)
    c = geometry.a - 0.5 * (second - first)
    b_t = geometry.b_t()
    if not geometry.is_flat_torus:
        return b_t + c * geometry.s - n * c, c, None
    divisor = geometry.divisor
    grid = divisor.grid
    w = divisor.omega_D - _ddc_D(phi0, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        residual = (b_t[:, None, None] + c * divisor.chi_field() / w - n * c
                    - 0.5 * n * (n - 1) * _gradient_D_squared(first, grid) / w)
    return residual, c, w


def _require_positive(c: np.ndarray, w: np.ndarray, t: np.ndarray) -> None:
    if np.min(c) <= 0:
        i = np.unravel_index(np.argmin(c), c.shape)
        raise MetricDegenerate(f"fiber coefficient c = {c[i]:.3e} at t = {t[i[0]]:.4g}")
    if w is not None and np.min(w) <= 0:
        i = np.unravel_index(np.argmin(w), w.shape)
        raise MetricDegenerate(f"D-block {w[i]:.3e} at t = {t[i[0]]:.4g}")


def reduced_residual(phi0: np.ndarray, geometry: CuspGeometry,
                     right: str = "one-sided") -> np.ndarray:
    """Reduced J-residual of a profile, zero exactly where the profile solves the model.

    Point D: R = b(t) + c·s − n·c. FlatTorus D adds the D-block w = ω_D − dd^c_D φ₀ and
    the mixed term: R = b(t) + c·χ_D/w − n·c − (n(n−1)/2)|∂_D φ₀′|²/w.
    """
    phi0 = _check_shape(phi0, geometry)
    residual, c, w = _residual_terms(phi0, geometry, right)
    _require_positive(c, w, geometry.t)
    return residual


# model operator ---------------------------------------------------------------

def _announce(convention: str, kappa: float, geometry: CuspGeometry) -> None:
    if convention == "greens" and convention not in _announced:
        _announced.add(convention)
        logger.warning(f"Green's convention −κ(∂_t² − ∂_t) with κ = {kappa:.6g}; "
                       f"the model operator default is −(b/a²)(∂_t − ∂_t²) with "
                       f"b/a² = {geometry.b / geometry.a ** 2:.6g}")


def tilde_delta0_apply(u: np.ndarray, geometry: CuspGeometry, kappa: float = None,
                       convention: str = "background") -> np.ndarray:
    """Model operator ⟨χ_D, dd^c_D u⟩_{ω_D} plus its t-part.

    convention "background": t-part −κ(∂_t − ∂_t²)u, κ defaults to b/a².
    convention "greens": t-part −κ(∂_t² − ∂_t)u, κ defaults to a.
    """
    if convention not in CONVENTIONS:
        raise ValueError(
            f"unknown convention {convention!r}, expected one of {CONVENTIONS}")
    u = _check_shape(u, geometry)
    if kappa is None:
        if convention == "background":
            kappa = geometry.b / geometry.a ** 2
        else:
            kappa = geometry.a
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    _announce(convention, kappa, geometry)
    first, second = _t_derivatives(u, geometry.h)
    if convention == "background":
        out = -kappa * (first - second)
    else:
        out = -kappa * (second - first)
    if geometry.is_flat_torus:
        divisor = geometry.divisor
        out = out + divisor.chi_field() / divisor.omega_D ** 2 * _ddc_D(u, divisor.grid)
    return out


def fiber_decompose(u: np.ndarray) -> tuple:
    """Split u(t, x_D) into its fiber mean u₀(t) and the fiber-mean-zero rest."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return u.copy(), np.zeros_like(u)
    u0 = np.mean(u, axis=tuple(range(1, u.ndim)))
    perp = u - u0.reshape((-1,) + (1,) * (u.ndim - 1))
    return u0, perp


# Green's formula --------------------------------------------------------------

def _tail_rate(g0: np.ndarray, t: np.ndarray) -> float:
    quarter = t >= t[0] + 0.75 * (t[-1] - t[0])
    g, s = g0[quarter], t[quarter]
    if np.any(g == 0) or not (np.all(g > 0) or np.all(g < 0)):
        raise TailFitFailed("tail of g0 changes sign or vanishes; no exponential rate")
    eta = -np.polyfit(s, np.log(np.abs(g)), 1)[0]
    if not np.isfinite(eta) or eta <= 0:
        raise TailFitFailed(f"tail of g0 does not decay (fitted rate {eta:.3g})")
    return float(eta)


def greens_solve(g0: np.ndarray, geometry: CuspGeometry, kappa: float = None,
                 tail: str = "fit", eta: float = None) -> np.ndarray:
    """v(t) = ∫_A^t e^s ∫_s^∞ e^{−u} g₀(u)/κ du ds by cumulative trapezoids.

    v solves −κ(v″ − v′) = g₀ with v(A) = 0 and bounded growth. Beyond T the data is
    continued as g₀(T)e^{−η(u−T)}: tail "fit" estimates η from the last quarter of g₀,
    "analytic-exp" takes the given η and "zero" drops the tail.
    """
    t = geometry.t
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != t.shape:
        raise ValueError(f"expected a t-profile of length {t.size}, got {g0.shape}")
    kappa = geometry.a if kappa is None else kappa
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if tail == "zero" or g0[-1] == 0:
        rest = 0.0
    elif tail in ("fit", "analytic-exp"):
        if tail == "fit":
            eta = _tail_rate(g0, t)
        elif eta is None or eta <= -1:
            raise ValueError("analytic-exp tail needs a rate eta > -1")
        rest = g0[-1] * np.exp(-t[-1]) / (kappa * (1.0 + eta))
        logger.debug(f"Green's tail: rate {eta:.6g}, mass {rest:.3e}")
    else:
        raise ValueError(f"unknown tail mode {tail!r}")
    inner = cumulative_trapezoid(np.exp(-t) * g0 / kappa, t, initial=0.0)
    outer = inner[-1] - inner + rest
    return cumulative_trapezoid(np.exp(t) * outer, t, initial=0.0)


def greens_residual(v: np.ndarray, g0: np.ndarray, geometry: CuspGeometry,
                    kappa: float = None) -> float:
    """sup over interior points of |−κ(v″ − v′) − g₀|."""
    kappa = geometry.a if kappa is None else kappa
    first, second = _t_derivatives(np.asarray(v, dtype=float), geometry.h)
    return float(np.max(np.abs(-kappa * (second - first) - g0)[1:-1]))


# solver -----------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticFit:
    """Tail fit φ₀ ≈ c_inf + c1·e^{−η t} and the limit-equation check.

    `eta` is +inf on a flat tail (degenerate) and nan when the tail does not decay.
    """
    c_inf: float
    c1: float
    eta: float
    s_inf: float
    s_target: float
    gap: float
    degenerate: bool = False
    converged: bool = True

    HEADER = ("c_inf", "eta", "s_inf", "s_target", "gap")

    def row(self) -> list:
        return [self.c_inf, self.eta, self.s_inf, self.s_target, self.gap]


@dataclass(frozen=True)
class CuspProfile:
    geometry: CuspGeometry
    t: np.ndarray = field(repr=False)
    phi0: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    fit: AsymptoticFit = None
    product_limit: bool = True
    c_gap: float = 0.0
    newton_iters: int = 0

    HEADER = ("t", "phi0", "c", "residual")

    def table_rows(self) -> np.ndarray:
        """(t, fiber-mean φ₀, fiber-mean c, sup_D |R|) per t-sample."""
        phi0, _ = fiber_decompose(self.phi0)
        c, _ = fiber_decompose(self.c)
        residual = np.abs(self.residual).reshape(self.t.size, -1).max(axis=1)
        return np.column_stack([self.t, phi0, c, residual])


def _t_operator(geometry: CuspGeometry) -> sparse.csr_matrix:
    # ∂_t² − ∂_t on the unknowns t_1..t_{M−1}: Dirichlet at A eliminated, ghost at T
    m, h = geometry.Mt - 1, geometry.h
    second = sparse.diags([1 / h ** 2, -2 / h ** 2, 1 / h ** 2], [-1, 0, 1],
                          shape=(m, m), format="lil")
    first = sparse.diags([-1 / (2 * h), 1 / (2 * h)], [-1, 1], shape=(m, m),
                         format="lil")
    second[m - 1, m - 2] = 2 / h ** 2
    first[m - 1, m - 2] = 0.0
    return (second - first).tocsr()


def _periodic_central(N: int, h: float) -> sparse.csr_matrix:
    C = sparse.diags([-1 / (2 * h), 1 / (2 * h)], [-1, 1], shape=(N, N), format="lil")
    C[0, N - 1] = -1 / (2 * h)
    C[N - 1, 0] = 1 / (2 * h)
    return C.tocsr()


def d_laplacian_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse matrix of the dd^c stencil on a flat 2-torus, C-order flattening."""
    hx, hy = grid.spacing
    eye = sparse.identity(grid.N, format="csr")
    Dx = sparse.kron(_periodic_central(grid.N, hx), eye)
    Dy = sparse.kron(eye, _periodic_central(grid.N, hy))
    return (0.25 * (Dx @ Dx + Dy @ Dy)).tocsr()


def _product_linearization(geometry: CuspGeometry) -> sparse.csc_matrix:
    """Jacobian of the residual at the product state c = a, w = ω_D."""
    T_op = _t_operator(geometry)
    n = geometry.n
    if not geometry.is_flat_torus:
        return (0.5 * (n - geometry.s) * T_op).tocsc()
    divisor = geometry.divisor
    chi = divisor.chi_field().reshape(-1)
    m = geometry.Mt - 1
    alpha = np.tile(0.5 * (n - chi / divisor.omega_D), m)
    beta = np.tile(geometry.a * chi / divisor.omega_D ** 2, m)
    eye_D = sparse.identity(chi.size, format="csr")
    L_D = d_laplacian_matrix(divisor.grid)
    J = (sparse.diags(alpha) @ sparse.kron(T_op, eye_D)
         + sparse.diags(beta) @ sparse.kron(sparse.identity(m), L_D))
    return J.tocsc()


def solve_cusp_bvp(geometry: CuspGeometry, boundary=0.0, tol: float = 1e-10,
                   max_iters: int = 50) -> CuspProfile:
    """Solve reduced_residual = 0 with φ₀(A) = boundary and φ₀′(T) = 0.

    Newton–Krylov on the interior and right-end unknowns, preconditioned by a sparse LU
    of the linearization at the product state. `boundary` is a number, or for a
    FlatTorus D an array over the D-grid.
    """
    n, t = geometry.n, geometry.t
    if geometry.s >= n:
        raise MetricDegenerate(f"s = {geometry.s:.6g} >= n leaves no positive fiber "
                               f"coefficient")
    tail_shape = geometry.shape[1:]
    start = np.broadcast_to(np.asarray(boundary, dtype=float), tail_shape)
    phi = np.broadcast_to(start, geometry.shape).copy()

    def F(x):
        phi[1:] = x.reshape((geometry.Mt - 1,) + tail_shape)
        return _residual_terms(phi, geometry, "neumann")[0][1:].ravel()

    lu = splu(_product_linearization(geometry))
    size = phi[1:].size
    precond = LinearOperator((size, size), matvec=lu.solve, dtype=float)
    steps = []
    logger.info(f"cusp BVP on [{geometry.A}, {geometry.T}] with {geometry.Mt} "
                f"t-points, s = {geometry.s:.10g}, target {geometry.s_target:.10g}")
    try:
        x = newton_krylov(F, phi[1:].ravel().copy(), f_tol=tol, inner_M=precond,
                          maxiter=max_iters, method="lgmres",
                          callback=lambda x, f: steps.append(float(np.max(np.abs(f)))))
    except NoConvergence as err:
        raise NewtonStalled(
            f"cusp Newton-Krylov stalled after {len(steps)} steps") from err
    phi[1:] = np.reshape(x, (geometry.Mt - 1,) + tail_shape)
    phi[0] = start
    residual, c, w = _residual_terms(phi, geometry, "neumann")
    _require_positive(c, w, t)
    residual[0] = 0.0
    logger.info(f"cusp BVP converged in {len(steps)} steps, residual "
                f"{np.max(np.abs(residual)):.3e}")

    profile = CuspProfile(geometry=geometry, t=t, phi0=phi, c=c, residual=residual,
                          newton_iters=len(steps))
    fit = fit_asymptotics(profile)
    c_mean, _ = fiber_decompose(c)
    late = t >= 0.5 * (geometry.A + geometry.T)
    c_target = geometry.b_t() / (n - fit.s_inf)
    c_gap = float(np.max(np.abs(c_mean - c_target)[late]))
    product_limit = abs(c_mean[-1] - geometry.a) <= 1e-6 * max(1.0, geometry.a)
    if not product_limit:
        logger.warning(f"NonProductLimit: c(T) = {c_mean[-1]:.10g} differs from a = "
                       f"{geometry.a:.10g}; φ₀′ grows linearly")
    return CuspProfile(geometry=geometry, t=t, phi0=phi, c=c, residual=residual,
                       fit=fit, product_limit=product_limit, c_gap=c_gap,
                       newton_iters=len(steps))


# asymptotics ------------------------------------------------------------------

def fit_exponential_tail(t: np.ndarray, values: np.ndarray) -> tuple:
    """Least-squares fit values ≈ c_inf + c1·e^{−η t}.

    Returns (c_inf, c1, eta, degenerate, converged). A flat series is degenerate with
    η = inf; a series that does not decay returns converged=False with η = nan.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    spread = float(np.ptp(y))
    if spread <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return float(np.mean(y)), 0.0, np.inf, True, True
    steps = np.diff(y)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        # the initial guess only needs the leading, monotone part
        sign = np.sign(steps[0])
        flips = np.sign(steps) != sign
        stop = np.argmax(flips) if np.any(flips) else steps.size
        steps = steps[:stop]
    lead = steps[:max(2, (steps.size + 1) // 2)]
    if lead.size < 2 or np.any(lead == 0):
        return float(y[-1]), 0.0, np.nan, False, False
    mid = 0.5 * (t[1:lead.size + 1] + t[:lead.size])
    eta0 = -np.polyfit(mid, np.log(np.abs(lead)), 1)[0]
    if not np.isfinite(eta0) or eta0 <= 1e-8:
        logger.warning("tail does not decay; no exponential fit")
        return float(y[-1]), 0.0, np.nan, False, False
    x = t - t[0]
    scale0 = (y[0] - y[-1]) / (1.0 - np.exp(-eta0 * x[-1]))

    def model(x, c_inf, c1, eta):
        return c_inf + c1 * np.exp(-eta * x)

    try:
        popt, _ = curve_fit(model, x, y, p0=[y[0] - scale0, scale0, eta0],
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, maxfev=20000)
    except RuntimeError:
        return float(y[-1]), 0.0, np.nan, False, False
    c_inf, c1, eta = (float(p) for p in popt)
    misfit = float(np.sqrt(np.mean((model(x, *popt) - y) ** 2))) / spread
    converged = eta > 0 and misfit <= 1e-3
    if not converged:
        logger.warning(
            f"exponential tail fit is poor: rate {eta:.4g}, misfit {misfit:.2e}")
    return c_inf, c1 * np.exp(eta * t[0]), eta, False, converged


def _limit_trace(profile: CuspProfile) -> float:
    geometry = profile.geometry
    if not geometry.is_flat_torus:
        return geometry.s
    divisor = geometry.divisor
    last = profile.phi0[-1:] - np.mean(profile.phi0[-1])
    w = divisor.omega_D - _ddc_D(last, divisor.grid)[0]
    return float(np.mean(divisor.chi_field() / w))


def fit_asymptotics(profile: CuspProfile, strict: bool = False) -> AsymptoticFit:
    """Fit the fiber mean of φ₀ on the tail half-window and check s_∞ = n − b/a.

    With strict=True a flat tail raises FitDegenerate instead of returning the η = inf
    sentinel.
    """
    geometry = profile.geometry
    t = profile.t
    mean, _ = fiber_decompose(profile.phi0)
    tail = t >= 0.5 * (geometry.A + geometry.T)
    if np.count_nonzero(tail) < 8:
        raise ValueError(f"need at least 8 tail samples, got {np.count_nonzero(tail)}")
    c_inf, c1, eta, degenerate, converged = fit_exponential_tail(t[tail], mean[tail])
    if degenerate:
        if strict:
            raise FitDegenerate(
                f"flat tail at c_inf = {c_inf:.12g}; decay rate unidentifiable")
        logger.warning(f"flat tail: c_inf = {c_inf:.12g}, decay rate reported as inf")
    s_inf = _limit_trace(profile)
    fit = AsymptoticFit(c_inf=c_inf, c1=c1, eta=eta, s_inf=s_inf,
                        s_target=geometry.s_target, gap=abs(s_inf - geometry.s_target),
                        degenerate=degenerate, converged=converged)
    logger.info(f"asymptotic fit: c_inf = {c_inf:.10g}, eta = {eta:.6g}, "
                f"|s_inf - s_target| = {fit.gap:.3e}")
    return fit


@dataclass(frozen=True)
class TranslationReport:
    centers: np.ndarray
    differences: np.ndarray
    monotone: bool
    decays: bool

    @property
    def flagged(self) -> bool:
        return not self.decays


def _sample_t(t: np.ndarray, values: np.ndarray, tq: float) -> np.ndarray:
    k = int(np.clip(np.searchsorted(t, tq) - 1, 0, t.size - 2))
    weight = (tq - t[k]) / (t[k + 1] - t[k])
    return (1 - weight) * values[k] + weight * values[k + 1]


def translation_sequence_test(profile: CuspProfile,
                              window: float = 2.0) -> TranslationReport:
    """Sup-differences of φ₀ over windows centred at t_j = A + window/2 + j².

    d_j = sup_{|s| <= window/2} |φ₀(t_j + s) − φ₀(t_j)|. A profile converging to a
    product has d_j → 0; linear growth keeps d_j bounded away from zero and is flagged.
    """
    t, phi = profile.t, profile.phi0
    A, T = t[0], t[-1]
    half = 0.5 * window
    centers = []
    j = 0
    while A + half + j ** 2 + half <= T:
        centers.append(A + half + j ** 2)
        j += 1
    if len(centers) < 3:
        raise WindowTooShort(
            f"only {len(centers)} translation windows fit in [{A}, {T}]")
    differences = []
    for center in centers:
        inside = np.abs(t - center) <= half
        reference = _sample_t(t, phi, center)
        differences.append(float(np.max(np.abs(phi[inside] - reference))))
    d = np.array(differences)
    monotone = bool(np.all(np.diff(d) <= 1e-14 + 1e-9 * d[:-1]))
    decays = bool(d.max() <= 1e-12 or d[-1] <= 0.5 * d[0])
    report = TranslationReport(centers=np.array(centers), differences=d,
                               monotone=monotone, decays=decays)
    if report.flagged:
        logger.warning(f"translation differences do not decay: {d}")
    return report


@dataclass(frozen=True)
class DecayReport:
    eta_mean: float
    eta_perp: float

    @property
    def improved(self) -> bool:
        return bool(self.eta_perp >= self.eta_mean + 0.5)


def decay_improvement(profile: CuspProfile) -> DecayReport:
    """Compare decay rates of the fiber mean and the fiber-perp part of φ₀.

    Both rates are fitted on the middle half of [A, T], away from the boundary layers.
    """
    geometry = profile.geometry
    if not geometry.is_flat_torus:
        raise ValueError("decay improvement needs a flat torus divisor")
    t = profile.t
    span = geometry.T - geometry.A
    window = (t >= geometry.A + 0.25 * span) & (t <= geometry.A + 0.75 * span)
    mean, perp = fiber_decompose(profile.phi0)
    eta_mean = fit_exponential_tail(t[window], mean[window])[2]
    columns = perp[window].reshape(np.count_nonzero(window), -1)
    k = int(np.argmax(np.ptp(columns, axis=0)))
    eta_perp = fit_exponential_tail(t[window], columns[:, k])[2]
    report = DecayReport(eta_mean=float(eta_mean), eta_perp=float(eta_perp))
    logger.info(f"decay rates: fiber mean {report.eta_mean:.4g}, fiber perp "
                f"{report.eta_perp:.4g}, improved {report.improved}")
    return report
