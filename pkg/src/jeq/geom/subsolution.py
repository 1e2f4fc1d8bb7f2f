"""Subsolution condition and asymptotic growth condition for a background metric."""
from dataclasses import dataclass

import numpy as np
from loguru import logger

from jeq.errors import NonPositiveMetric, NonPositiveWeight
from jeq.geom.core import (HermitianField, PotentialField, generalized_eigenvalues,
                           mixed_discriminant, trace_ratio)


@dataclass(frozen=True)
class SlackReport:
    """Global subsolution slack.

    Args:
        delta_max: n / sup_x max_i Σ_{k≠i} μ_k − 1 (+inf for n = 1).
        worst_point: grid index attaining the sup.
        strict: True iff delta_max > 0.
    """
    delta_max: float
    worst_point: tuple
    strict: bool


def subsolution_slack(omega: HermitianField, chi: HermitianField) -> SlackReport:
    n = omega.grid.n
    mu = generalized_eigenvalues(chi, omega)
    # max_i Σ_{k≠i} μ_k drops the smallest eigenvalue
    s_star = np.sum(mu, axis=-1) - mu[..., 0]
    flat = int(np.argmax(s_star))
    worst = tuple(int(i) for i in np.unravel_index(flat, s_star.shape))
    sup = float(s_star.reshape(-1)[flat])
    if n == 1:
        delta_max = np.inf
    else:
        delta_max = n / sup - 1.0
    report = SlackReport(delta_max=delta_max, worst_point=worst, strict=delta_max > 0)
    if not report.strict:
        logger.info(f"not a strict subsolution: delta_max = {delta_max:.6g} at {worst}")
    return report


def path_subsolution_check(omega: HermitianField, chi: HermitianField, t: float,
                           delta: float) -> bool:
    """Whether ω is a subsolution with constant δ for χ_t = tχ + (1−t)ω."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"path parameter must be in [0, 1], got {t}")
    chi_t = chi * t + omega * (1.0 - t)
    return subsolution_slack(omega, chi_t).delta_max >= delta


def slack_profile(omega: HermitianField, chi: HermitianField, ts) -> np.ndarray:
    """δ_max along χ_t for each t in `ts`."""
    return np.array([subsolution_slack(omega, chi * t + omega * (1.0 - t)).delta_max
                     for t in ts])


def asymptotic_deviation(omega: HermitianField, chi: HermitianField,
                         rho: PotentialField, eta: float, C: float = 1.0) -> float:
    """sup |ω^n/(ω^{n−1}∧χ) − C| · ρ^η over the grid."""
    if eta < 0:
        raise ValueError(f"growth exponent must be >= 0, got {eta}")
    if np.any(rho.values <= 0):
        raise NonPositiveWeight("weight rho must be positive everywhere")
    n = omega.grid.n
    # ω^n/(ω^{n−1}∧χ) = n / tr_ω χ
    ratio = n / trace_ratio(omega, chi).values
    return float(np.max(np.abs(ratio - C) * rho.values ** eta))


def _form_parts(omega_point, chi_point):
    # Θ_δ = P − (1+δ)Q with P from nω^{n−1} and Q from (n−1)ω^{n−2}∧χ
    omega_point = np.asarray(omega_point, dtype=complex)
    chi_point = np.asarray(chi_point, dtype=complex)
    n = omega_point.shape[-1]
    batch = omega_point.shape[:-2]
    P = np.zeros(batch + (n, n), dtype=complex)
    Q = np.zeros(batch + (n, n), dtype=complex)
    for k in range(n):
        for l in range(n):
            unit = np.zeros(batch + (n, n), dtype=complex)
            unit[..., k, l] = 1.0
            # Θ(E_kl) = tr(M E_kl) = M_lk
            P[..., l, k] = n * mixed_discriminant([omega_point] * (n - 1) + [unit])
            if n >= 2:
                Q[..., l, k] = (n - 1) * mixed_discriminant(
                    [omega_point] * (n - 2) + [chi_point, unit])
    hermitian = lambda A: 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))  # noqa: E731
    return hermitian(P), hermitian(Q)


def form_positivity_matrix(omega_point: np.ndarray, chi_point: np.ndarray,
                           delta: float) -> np.ndarray:
    """Hermitian matrix M of the (n−1,n−1)-form Θ = nω^{n−1} − (1+δ)(n−1)ω^{n−2}∧χ.

    Θ∧β = tr(Mβ)·(volume) for every (1,1)-form β, so Θ is positive iff M ≥ 0. Works
    on stacks of n×n matrices; the wedges are evaluated through mixed discriminants,
    with no eigen-decomposition involved.
    """
    P, Q = _form_parts(omega_point, chi_point)
    return P - (1.0 + delta) * Q


def form_positivity_slack(omega_point: np.ndarray, chi_point: np.ndarray,
                          step: float = 1e-3, delta_stop: float = 10.0) -> float:
    """Largest δ on the lattice {0, step, 2·step, ...} keeping Θ_δ positive at a point.

    Returns −step when Θ already fails at δ = 0, and the last lattice value if the scan
    never fails.
    """
    if np.min(np.linalg.eigvalsh(np.asarray(omega_point, dtype=complex))) <= 0:
        raise NonPositiveMetric("omega is not positive")
    P, Q = _form_parts(omega_point, chi_point)
    deltas = np.arange(0.0, delta_stop + step / 2, step)
    lowest = np.linalg.eigvalsh(P - (1.0 + deltas)[:, None, None] * Q)[:, 0]
    failed = np.nonzero(lowest < -1e-12)[0]
    if failed.size == 0:
        return float(deltas[-1])
    if failed[0] == 0:
        return -step
    return float(deltas[failed[0] - 1])
