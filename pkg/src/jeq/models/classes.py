"""Intersection arithmetic for classes on a Kähler surface, in exact rationals."""
from dataclasses import dataclass

import sympy as sp
from loguru import logger

from jeq.errors import (
    ConditionViolated,
    DegenerateClass,
    DegeneratePairing,
    DegenerateRestriction,
)
from jeq.models.cusp import background_coefficients


def to_exact(value):
    """Exact sympy number from an int, a fraction string such as "3/2", or a float."""
    if isinstance(value, float):
        return sp.nsimplify(value, rational=True)
    return sp.sympify(value)


def _vector(values, rank: int, name: str) -> sp.Matrix:
    vector = sp.Matrix([to_exact(v) for v in values])
    if vector.shape != (rank, 1):
        raise ValueError(f"class {name} must have {rank} entries, got {len(values)}")
    return vector


@dataclass(frozen=True)
class SurfaceClassData:
    """Classes in a rank-r sublattice of H^{1,1} with intersection matrix Q.

    Args:
        Q: symmetric r×r intersection matrix.
        omega, chi, D: class vectors of [ω], [χ] and the divisor [D].
        KX: optional canonical class.
        no_negative_curves: user assertion that X has no curves of negative
            self-intersection; it is echoed, never computed.
    """
    Q: sp.Matrix
    omega: sp.Matrix
    chi: sp.Matrix
    D: sp.Matrix
    KX: sp.Matrix = None
    no_negative_curves: bool = False

    def __post_init__(self):
        Q = sp.Matrix([[to_exact(q) for q in row] for row in self.Q])
        if not Q.is_square or Q != Q.T:
            raise ValueError("intersection matrix must be square and symmetric")
        rank = Q.shape[0]
        object.__setattr__(self, "Q", Q)
        for name in ("omega", "chi", "D"):
            object.__setattr__(self, name, _vector(getattr(self, name), rank, name))
        if self.KX is not None:
            object.__setattr__(self, "KX", _vector(self.KX, rank, "KX"))
        if self.pair(self.omega, self.omega).is_positive is False:
            raise DegenerateClass("[ω]² must be positive for a Kähler class")

    @property
    def rank(self) -> int:
        return self.Q.shape[0]

    def pair(self, u: sp.Matrix, v: sp.Matrix):
        return sp.simplify((u.T * self.Q * v)[0, 0])


@dataclass(frozen=True)
class DonaldsonReport:
    alpha: sp.Matrix
    alpha_sq: sp.Expr
    alpha_dot_omega: sp.Expr
    verdict: str
    verified: tuple
    assumed: tuple


@dataclass(frozen=True)
class CDReport:
    C_D: sp.Expr
    cd_below_n: bool


def j_constant(data: SurfaceClassData):
    """C = [ω]² / ([ω]·[χ])."""
    denominator = data.pair(data.omega, data.chi)
    if denominator == 0:
        raise DegeneratePairing("[ω]·[χ] = 0")
    return sp.simplify(data.pair(data.omega, data.omega) / denominator)


def donaldson_check(data: SurfaceClassData) -> DonaldsonReport:
    """α = 2[ω] − C[χ] and the two positivity numbers behind Lam's criterion."""
    C = j_constant(data)
    alpha = sp.simplify(2 * data.omega - C * data.chi)
    alpha_sq = data.pair(alpha, alpha)
    alpha_dot_omega = data.pair(alpha, data.omega)
    verified = []
    if alpha_sq.is_positive:
        verified.append("alpha^2 > 0")
    if alpha_dot_omega.is_positive:
        verified.append("alpha.omega > 0")
    assumed = ()
    if data.no_negative_curves:
        assumed = ("no curves of negative self-intersection",)
    if len(verified) == 2 and data.no_negative_curves:
        verdict = "KählerByLam"
    else:
        verdict = "Inconclusive"
    logger.info(f"Donaldson check: alpha^2 = {alpha_sq}, "
                f"alpha.omega = {alpha_dot_omega}, {verdict}")
    return DonaldsonReport(alpha=alpha, alpha_sq=alpha_sq,
                           alpha_dot_omega=alpha_dot_omega, verdict=verdict,
                           verified=tuple(verified), assumed=assumed)


def restricted_constant_CD(data: SurfaceClassData, strict_subsolution: bool = True,
                           n: int = 2) -> CDReport:
    """C_D = ([χ]·[D]) / ([ω]·[D]) and the check n − C_D > 0."""
    degree = data.pair(data.omega, data.D)
    if degree.is_positive is not True:
        raise DegenerateRestriction(f"[ω]·[D] = {degree} is not positive")
    C_D = sp.simplify(data.pair(data.chi, data.D) / degree)
    holds = bool((n - C_D).is_positive)
    if strict_subsolution and not holds:
        logger.warning(f"C_D = {C_D} violates n - C_D > 0 for a strict subsolution")
    return CDReport(C_D=C_D, cd_below_n=holds)


def coefficient_b(a, C, C_D):
    """b with 2/(C(1/C_D + a/b)) = 1, i.e. b = a/(2/C − 1/C_D)."""
    a, C, C_D = to_exact(a), to_exact(C), to_exact(C_D)
    if not (2 * C_D - C).is_positive:
        raise ConditionViolated(f"need 2 C_D > C, got C_D = {C_D}, C = {C}")
    return sp.simplify(a / (2 / C - 1 / C_D))


def class_pipeline(data: SurfaceClassData, a) -> dict:
    """C → α → C_D → b → a′ = 2b/(2 − C_D), with the fiber balance 2b/a′ = 2 − C_D."""
    C = j_constant(data)
    report = donaldson_check(data)
    cd = restricted_constant_CD(data)
    b = coefficient_b(a, C, cd.C_D)
    a_prime = background_coefficients(b, cd.C_D, 2)
    logger.warning(f"identifying the background coefficient 2b/(n - C_D) with the "
                   f"fiber coefficient a = {a_prime}")
    balance = sp.simplify(2 * b / a_prime - (2 - cd.C_D))
    return {
        "C": C,
        "alpha": list(report.alpha),
        "alpha_sq": report.alpha_sq,
        "alpha_dot_omega": report.alpha_dot_omega,
        "verdict": report.verdict,
        "verified": list(report.verified),
        "assumed": list(report.assumed),
        "C_D": cd.C_D,
        "cd_below_n": cd.cd_below_n,
        "a": to_exact(a),
        "b": b,
        "a_prime": a_prime,
        "round_trip": sp.simplify(a_prime - to_exact(a)) == 0,
        "balance_defect": balance,
    }


def report_json(report: dict) -> dict:
    """JSON-ready copy: exact numbers as strings, plus float values."""
    out = {}
    for key, value in report.items():
        if isinstance(value, list):
            out[key] = [str(v) if isinstance(v, sp.Basic) else v for v in value]
        elif isinstance(value, sp.Basic):
            out[key] = str(value)
            if value.is_number:
                out[f"{key}_float"] = float(value)
        else:
            out[key] = value
    return out
