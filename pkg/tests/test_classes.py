import pytest
import sympy as sp

from jeq.errors import (
    ConditionViolated,
    DegenerateClass,
    DegeneratePairing,
    DegenerateRestriction,
)
from jeq.models.classes import (
    SurfaceClassData,
    class_pipeline,
    coefficient_b,
    donaldson_check,
    j_constant,
    report_json,
    restricted_constant_CD,
)

R = sp.Rational


@pytest.fixture
def hyperbolic():
    return SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1], chi=[1, 0], D=[1, 1],
                            no_negative_curves=True)


def test_j_constant(hyperbolic):
    assert j_constant(hyperbolic) == R(3, 2)
    same = SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1], chi=[2, 1], D=[1, 1])
    assert j_constant(same) == 1
    double = SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1], chi=[4, 2], D=[1, 1])
    assert j_constant(double) == R(1, 2)
    scaled = SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[4, 2], chi=[1, 0], D=[1, 1])
    assert j_constant(scaled) == 2 * j_constant(hyperbolic)


def test_degenerate_inputs():
    with pytest.raises(DegeneratePairing):
        j_constant(SurfaceClassData(Q=[[1, 0], [0, 1]], omega=[1, 0], chi=[0, 1],
                                    D=[1, 1]))
    with pytest.raises(DegenerateClass):
        SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[1, 2], chi=[1, 0], D=[1, 1])
    with pytest.raises(ValueError):
        SurfaceClassData(Q=[[1, 2], [0, -1]], omega=[2, 1], chi=[1, 0], D=[1, 1])
    with pytest.raises(ValueError):
        SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1, 0], chi=[1, 0], D=[1, 1])
    with pytest.raises(DegenerateRestriction):
        restricted_constant_CD(SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1],
                                                chi=[1, 0], D=[1, 2]))


def test_donaldson_check(hyperbolic):
    report = donaldson_check(hyperbolic)
    assert list(report.alpha) == [R(5, 2), 2]
    assert report.alpha_sq == R(9, 4)
    assert report.alpha_dot_omega == 3
    assert report.verdict == "KählerByLam"
    assert len(report.verified) == 2
    assert report.assumed == ("no curves of negative self-intersection",)
    unasserted = SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[2, 1], chi=[1, 0],
                                  D=[1, 1])
    assert donaldson_check(unasserted).verdict == "Inconclusive"


def test_alpha_identities_under_the_canonical_normalization():
    w1, w2, k2 = sp.symbols("w1 w2 k2")
    k1 = (w1 ** 2 - w2 ** 2 + w2 * k2) / w1
    data = SurfaceClassData(Q=[[1, 0], [0, -1]], omega=[w1, w2], chi=[k1, k2], D=[1, 0])
    C = j_constant(data)
    assert sp.simplify(C - 1) == 0
    report = donaldson_check(data)
    K_sq = data.pair(data.chi, data.chi)
    assert sp.simplify(report.alpha_sq - C ** 2 * K_sq) == 0
    assert sp.simplify(report.alpha_dot_omega - data.pair(data.omega, data.omega)) == 0
    assert report.verdict == "Inconclusive"


def test_restricted_constant(hyperbolic):
    report = restricted_constant_CD(hyperbolic)
    assert report.C_D == 1
    assert report.cd_below_n
    orthogonal = SurfaceClassData(Q=[[1, 0], [0, 1]], omega=[1, 1], chi=[0, 1],
                                  D=[1, 0])
    assert restricted_constant_CD(orthogonal).C_D == 0
    large = SurfaceClassData(Q=[[1, 0], [0, 1]], omega=[1, 0], chi=[3, 0], D=[1, 0])
    assert not restricted_constant_CD(large).cd_below_n


def test_coefficient_b():
    assert coefficient_b(1, 1, 1) == 1
    assert coefficient_b(3, "3/2", 1) == 9
    with pytest.raises(ConditionViolated):
        coefficient_b(1, 2, 1)
    assert coefficient_b(1, 0.5, 1) == R(1, 3)


def test_pipeline(hyperbolic):
    report = class_pipeline(hyperbolic, 3)
    assert report["C"] == R(3, 2)
    assert report["C_D"] == 1
    assert report["b"] == 9
    assert report["a_prime"] == 18
    assert not report["round_trip"]
    assert report["balance_defect"] == 0
    as_json = report_json(report)
    assert as_json["C"] == "3/2"
    assert as_json["C_float"] == 1.5
    assert as_json["alpha"] == ["5/2", "2"]
    assert as_json["verdict"] == "KählerByLam"


def test_pipeline_round_trip():
    data = SurfaceClassData(Q=[[1, 0], [0, 1]], omega=[1, 0], chi=["3/2", "1/2"],
                            D=[1, -1])
    report = class_pipeline(data, 1)
    assert report["C"] == R(2, 3)
    assert report["C_D"] == 1
    assert report["b"] == R(1, 2)
    assert report["round_trip"]


if __name__ == "__main__":
    test_coefficient_b()
