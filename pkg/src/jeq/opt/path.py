"""Two-parameter continuity path for the J-equation on the flat torus model.

The path equation in trace form is

    R(φ) = tr_{ω_φ}(tχ + (1−t)ω) − n e^{−εφ} = 0,

with ω_φ = ω + dd^c φ and the pair normalized so that the cohomological constant is 1.
The path is marched in t at fixed ε, then ε is halved at t = 1 down to a floor.
"""
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from loguru import logger
from scipy.sparse.linalg import LinearOperator, gmres

from jeq.errors import (ContinuationFailed, LinearSolveFailed, MaxIters, NewtonStalled,
                        NonPositiveMetric)
from jeq.geom.core import (HermitianField, PotentialField, TraceDiagnostics, ddc,
                           ddc_array, first_derivatives, integrate, require_positive,
                           trace_diagnostics, trace_ratio, volume_density)
from jeq.geom.subsolution import subsolution_slack


@dataclass(frozen=True)
class PathConfig:
    """Options of the continuity path.

    Args:
        eps0: initial ε.
        eps_floor: smallest ε reached by the halving phase.
        t_step: initial (and largest) Δt of the t-continuation.
        newton_tol: target sup-norm of the residual.
        max_newton_iters: Newton iterations per solve.
        backtrack: step reduction factor of the line search.
        min_step: smallest accepted line-search step.
        delta0_monitor: threshold monitored against ε‖φ‖_∞.
        min_t_step: Δt below which the continuation gives up.
        krylov_rtol: relative tolerance of the inner GMRES solve.
        krylov_restart: GMRES restart length.
        positivity_floor: smallest eigenvalue of ω_φ accepted by the line search.
    """
    eps0: float = 0.5
    eps_floor: float = 1e-4
    t_step: float = 0.25
    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    backtrack: float = 0.5
    min_step: float = 1e-4
    delta0_monitor: float = 0.1
    min_t_step: float = 1e-6
    krylov_rtol: float = 1e-8
    krylov_restart: int = 50
    positivity_floor: float = 1e-8

    def __post_init__(self):
        if not self.eps0 > self.eps_floor > 0:
            raise ValueError(
                f"need eps0 > eps_floor > 0, got {self.eps0}, {self.eps_floor}")
        if not 0 < self.t_step <= 1:
            raise ValueError(f"t_step must be in (0, 1], got {self.t_step}")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must be in (0, 1)")
        if self.max_newton_iters < 1 or self.krylov_restart < 1:
            raise ValueError("iteration limits must be positive")


@dataclass(frozen=True)
class PathState:
    eps: float
    t: float
    phi: PotentialField = field(repr=False)
    residual_sup: float
    diagnostics: TraceDiagnostics
    eps_phi_sup: float
    phi_l2: float
    gradient_energy: float
    tr_chi_omega_sup: float
    osc_phi: float
    newton_iters: int = 0
    volume_drift: float = 0.0


TRACE_COLUMNS = ["step", "eps", "t", "newton_iters", "residual_sup", "phi_sup",
                 "phi_l2", "eps_phi_sup", "tr_chi_omega_sup", "osc_phi",
                 "gradient_energy", "volume_drift", "delta0_ok", "c2_ok"]


@dataclass
class PathRecord:
    step: int
    eps: float
    t: float
    newton_iters: int
    residual_sup: float
    phi_sup: float
    phi_l2: float
    eps_phi_sup: float
    tr_chi_omega_sup: float
    osc_phi: float
    gradient_energy: float
    volume_drift: float
    delta0_ok: bool
    c2_ok: bool = True
    phase: str = "t"

    def row(self) -> list:
        values = asdict(self)
        return [float(values[name]) for name in TRACE_COLUMNS]


@dataclass
class PathResult:
    """Outcome of a march: last state, per-step records and the ε → 0 estimate."""
    final: PathState
    records: list
    extrapolated: PotentialField
    extrapolation_order: int
    c2_fit: tuple
    delta0_ok: bool
    c2_ok: bool
    eps_levels: list


def discrete_volume(omega: HermitianField) -> float:
    """∫ω^n as Σ det g · dV."""
    return integrate(volume_density(omega), omega.grid)


def discrete_pairing(omega: HermitianField, chi: HermitianField) -> float:
    """∫ω^{n−1}∧χ as Σ det g · tr_ω χ / n · dV."""
    n = omega.grid.n
    density = volume_density(omega) * trace_ratio(omega, chi).values / n
    return integrate(density, omega.grid)


def pairing_constant(omega: HermitianField, chi: HermitianField) -> float:
    return discrete_volume(omega) / discrete_pairing(omega, chi)


def normalize_pair(omega: HermitianField, chi: HermitianField):
    """Rescale so that ∫ω'^n = ∫ω'^{n−1}∧χ' = 1.

    Returns:
        (ω', χ', C) with C = ∫ω^n / ∫ω^{n−1}∧χ of the input pair.
    """
    n = omega.grid.n
    volume = discrete_volume(omega)
    pairing = discrete_pairing(omega, chi)
    scale_omega = volume ** (-1.0 / n)
    scale_chi = 1.0 / (scale_omega ** (n - 1) * pairing)
    C = volume / pairing
    logger.info(f"normalized pair: C = {C:.12g}, "
                f"scales ({scale_omega:.6g}, {scale_chi:.6g})")
    return omega * scale_omega, chi * scale_chi, C


def richardson_zero(eps_values: list, fields: list) -> np.ndarray:
    """Polynomial extrapolation to ε = 0 through the given (ε, field) samples."""
    eps_values = np.asarray(eps_values, dtype=float)
    out = np.zeros_like(fields[0])
    for k, sample in enumerate(fields):
        others = np.delete(eps_values, k)
        weight = np.prod(-others / (eps_values[k] - others))
        out = out + weight * sample
    return out


class ContinuityPath:
    """Damped Newton solver for the path equation on a fixed pair (ω, χ).

    Args:
        omega: background Kähler metric.
        chi: target form.
        config: solver options.
    """

    def __init__(self, omega: HermitianField, chi: HermitianField,
                 config: PathConfig = None) -> None:
        self.omega = omega
        self.chi = chi
        self.grid = omega.grid
        self.config = PathConfig() if config is None else config
        require_positive(omega, "omega")
        self.reference_volume = discrete_volume(omega)
        # weights of the discrete L^2 and gradient norms
        self._weight = volume_density(omega) * self.grid.cell_volume
        self._omega_inv = np.linalg.inv(omega.values)

    def chi_t(self, t: float) -> HermitianField:
        return self.chi * t + self.omega * (1.0 - t)

    def residual(self, phi: PotentialField, eps: float, t: float) -> PotentialField:
        n = self.grid.n
        omega_phi = self.omega + ddc(phi)
        trace = trace_ratio(omega_phi, self.chi_t(t))
        return trace - n * np.exp(-eps * phi.values)

    def _operator_coefficients(self, phi: PotentialField, eps: float, t: float):
        n = self.grid.n
        omega_phi = self.omega + ddc(phi)
        require_positive(omega_phi, "omega_phi")
        g_inv = np.linalg.inv(omega_phi.values)
        # h^{kl̄} = g^{kj̄} g^{il̄} (χ_t)_{ij̄}
        h = g_inv @ self.chi_t(t).values @ g_inv
        zeroth = n * eps * np.exp(-eps * phi.values)
        return h, zeroth

    def _apply(self, h, zeroth, u: np.ndarray) -> np.ndarray:
        second = ddc_array(u, self.grid.spacing, self.grid.n)
        return np.einsum("...ab,...ba->...", h, second).real - zeroth * u

    def linearized_apply(self, u: PotentialField, phi: PotentialField, eps: float,
                         t: float) -> PotentialField:
        """L u = h^{kl̄} u_{kl̄} − nε e^{−εφ} u, so that dR/dφ · u = −L u."""
        h, zeroth = self._operator_coefficients(phi, eps, t)
        return PotentialField(self.grid, self._apply(h, zeroth, u.values))

    def _jacobi(self, h, zeroth) -> np.ndarray:
        # diagonal of −L: the composed central stencil contributes −1/(2h²) per axis
        spacing = self.grid.spacing
        diag = np.zeros(self.grid.shape)
        for a in range(self.grid.n):
            weight = 0.25 * (0.5 / spacing[2 * a] ** 2 + 0.5 / spacing[2 * a + 1] ** 2)
            diag += h[..., a, a].real * weight
        return diag + zeroth

    def _newton_direction(self, phi: PotentialField, eps: float, t: float,
                          res: PotentialField) -> np.ndarray:
        cfg = self.config
        shape, size = self.grid.shape, self.grid.size
        h, zeroth = self._operator_coefficients(phi, eps, t)
        jacobi = self._jacobi(h, zeroth).reshape(-1)

        def matvec(v):
            return -self._apply(h, zeroth, np.reshape(v, shape)).reshape(-1)

        A = LinearOperator((size, size), matvec=matvec, dtype=float)
        M = LinearOperator((size, size), matvec=lambda v: np.ravel(v) / jacobi,
                           dtype=float)
        inner = []
        maxiter = max(1, math.ceil(10 * size / cfg.krylov_restart))
        delta, info = gmres(A, res.values.reshape(-1), rtol=cfg.krylov_rtol,
                            restart=cfg.krylov_restart, maxiter=maxiter, M=M,
                            callback=inner.append, callback_type="pr_norm")
        logger.debug(f"  GMRES: {len(inner)} inner iterations, info={info}")
        if info != 0:
            raise LinearSolveFailed(
                f"GMRES did not converge at (eps={eps:.4g}, t={t:.4g}), info={info}")
        return delta.reshape(shape)

    def _admissible(self, phi: PotentialField) -> bool:
        try:
            require_positive(self.omega + ddc(phi), "omega_phi",
                             floor=self.config.positivity_floor)
        except NonPositiveMetric:
            return False
        return True

    def newton_solve(self, phi_init: PotentialField, eps: float, t: float) -> PathState:
        """Damped Newton iteration for R(φ) = 0 at fixed (ε, t)."""
        cfg = self.config
        phi = phi_init
        try:
            res = self.residual(phi, eps, t)
        except NonPositiveMetric as err:
            raise NewtonStalled(
                f"starting potential is not admissible at (eps={eps:.4g}, t={t:.4g})"
            ) from err
        current = res.sup()
        iters = 0
        while current > cfg.newton_tol:
            if iters >= cfg.max_newton_iters:
                raise MaxIters(f"no convergence in {iters} Newton iterations, "
                               f"residual {current:.3e}")
            direction = self._newton_direction(phi, eps, t, res)
            step = 1.0
            while True:
                candidate = phi - step * direction
                if self._admissible(candidate):
                    trial = self.residual(candidate, eps, t)
                    if trial.sup() < current:
                        break
                step *= cfg.backtrack
                if step < cfg.min_step:
                    raise NewtonStalled(f"line search exhausted at (eps={eps:.4g}, "
                                        f"t={t:.4g}), residual {current:.3e}")
            phi, res, current = candidate, trial, trial.sup()
            iters += 1
            logger.debug(f"  newton {iters}: residual {current:.3e}, step {step:.3g}")
        return self.state(phi, eps, t, res, iters)

    def state(self, phi: PotentialField, eps: float, t: float,
              res: PotentialField = None, iters: int = 0) -> PathState:
        """PathState with the diagnostics monitored along the path."""
        if res is None:
            res = self.residual(phi, eps, t)
        omega_phi = self.omega + ddc(phi)
        diagnostics = trace_diagnostics(omega_phi, self.chi_t(t), res)
        grad = first_derivatives(phi)
        grad_sq = np.einsum("...i,...ij,...j->...", np.conj(grad), self._omega_inv,
                            grad).real
        volume = discrete_volume(omega_phi)
        try:
            tr_chi = float(np.max(trace_ratio(self.chi, omega_phi).values))
        except NonPositiveMetric:
            tr_chi = float("nan")
        return PathState(
            eps=eps, t=t, phi=phi, residual_sup=res.sup(), diagnostics=diagnostics,
            eps_phi_sup=eps * phi.sup(),
            phi_l2=float(np.sqrt(np.sum(phi.values ** 2 * self._weight))),
            gradient_energy=float(np.sum(grad_sq * self._weight)),
            tr_chi_omega_sup=tr_chi,
            osc_phi=phi.oscillation(), newton_iters=iters,
            volume_drift=abs(volume - self.reference_volume) / self.reference_volume)

    def _record(self, step: int, state: PathState, phase: str) -> PathRecord:
        return PathRecord(step=step, eps=state.eps, t=state.t,
                          newton_iters=state.newton_iters,
                          residual_sup=state.residual_sup,
                          phi_sup=state.phi.sup(), phi_l2=state.phi_l2,
                          eps_phi_sup=state.eps_phi_sup,
                          tr_chi_omega_sup=state.tr_chi_omega_sup,
                          osc_phi=state.osc_phi,
                          gradient_energy=state.gradient_energy,
                          volume_drift=state.volume_drift,
                          delta0_ok=state.eps_phi_sup <= self.config.delta0_monitor,
                          phase=phase)

    def march(self) -> PathResult:
        """Continue from (ε₀, 0) to (ε₀, 1), then halve ε at t = 1 down to ε_floor."""
        cfg = self.config
        start = time.perf_counter()
        slack = subsolution_slack(self.omega, self.chi)
        if not slack.strict:
            logger.warning(f"omega is not a strict subsolution (delta_max = "
                           f"{slack.delta_max:.4g}); the path may not reach t = 1")
        C = pairing_constant(self.omega, self.chi)
        if abs(C - 1.0) > 1e-8:
            logger.warning(f"pair is not normalized (C = {C:.10g}); solving with C = 1")

        eps, t, dt = cfg.eps0, 0.0, cfg.t_step
        state = self.newton_solve(PotentialField.zeros(self.grid), eps, t)
        records = [self._record(0, state, "t")]
        logger.info(f"march: eps = {eps:.4g}, t-continuation with dt = {dt:.4g}")
        while t < 1.0:
            t_next = min(1.0, t + dt)
            try:
                state = self.newton_solve(state.phi, eps, t_next)
            except (NewtonStalled, LinearSolveFailed, MaxIters) as err:
                dt /= 2
                logger.info(f"  t = {t_next:.6g} failed ({type(err).__name__}), "
                            f"dt -> {dt:.3g}")
                if dt < cfg.min_t_step:
                    raise ContinuationFailed(
                        f"dt underflow below t = {t_next:.6g}") from err
                continue
            t = t_next
            dt = min(2 * dt, cfg.t_step)
            records.append(self._record(len(records), state, "t"))
            logger.info(f"  t = {t:.6g}: {state.newton_iters} newton iterations, "
                        f"|phi| = {state.phi.sup():.6e}")

        levels = [state]
        while eps > cfg.eps_floor:
            eps = max(eps / 2, cfg.eps_floor)
            state = self.newton_solve(state.phi, eps, 1.0)
            levels.append(state)
            records.append(self._record(len(records), state, "eps"))
            logger.info(f"  eps = {eps:.4g}: {state.newton_iters} newton iterations, "
                        f"|phi| = {state.phi.sup():.6e}, "
                        f"eps|phi| = {state.eps_phi_sup:.3e}")

        tail = levels[-3:]
        extrapolated = richardson_zero([s.eps for s in tail],
                                       [s.phi.values - s.phi.mean() for s in tail])
        extrapolated = PotentialField(self.grid, extrapolated - np.mean(extrapolated))
        c2_fit = _fit_c2_bound([r for r in records if r.phase == "t"])
        for r in records:
            bound = c2_fit[0] * np.exp(c2_fit[1] * r.osc_phi) * (1 + 1e-9)
            r.c2_ok = bool(r.tr_chi_omega_sup <= bound)
        result = PathResult(final=state, records=records, extrapolated=extrapolated,
                            extrapolation_order=len(tail) - 1, c2_fit=c2_fit,
                            delta0_ok=all(r.delta0_ok for r in records),
                            c2_ok=all(r.c2_ok for r in records),
                            eps_levels=[s.eps for s in levels])
        logger.info(f"march done in {time.perf_counter() - start:.2f} s: "
                    f"residual {state.residual_sup:.3e}, delta0 monitor "
                    f"{'ok' if result.delta0_ok else 'VIOLATED'}")
        return result


def _fit_c2_bound(records: list) -> tuple:
    """(C, A) with sup tr_χ ω_φ <= C e^{A osc φ} on the t-phase records."""
    osc = np.array([r.osc_phi for r in records])
    trace = np.array([r.tr_chi_omega_sup for r in records])
    A = 0.0
    if len(records) >= 2 and np.ptp(osc) > 1e-12:
        A = max(0.0, float(np.polyfit(osc, np.log(trace), 1)[0]))
    C = float(np.max(trace * np.exp(-A * osc)))
    return C, A


# functional interface ---------------------------------------------------------

def residual(phi: PotentialField, eps: float, t: float, omega: HermitianField,
             chi: HermitianField) -> PotentialField:
    return ContinuityPath(omega, chi).residual(phi, eps, t)


def linearized_apply(u: PotentialField, phi: PotentialField, eps: float, t: float,
                     omega: HermitianField, chi: HermitianField) -> PotentialField:
    return ContinuityPath(omega, chi).linearized_apply(u, phi, eps, t)


def newton_solve(phi_init: PotentialField, eps: float, t: float, omega: HermitianField,
                 chi: HermitianField, config: PathConfig = None) -> PathState:
    return ContinuityPath(omega, chi, config).newton_solve(phi_init, eps, t)


def march_path(omega: HermitianField, chi: HermitianField,
               config: PathConfig = None) -> PathResult:
    return ContinuityPath(omega, chi, config).march()
