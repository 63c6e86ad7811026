import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgn import levy, matching, validation
from pgn.errors import DomainError, MatchInfeasible

TS = levy.TruncStable


def test_match4_example():
    res = matching.match4(TS(1, 1, 1), 1.0, 4.0)
    assert res.s == pytest.approx(1 / 12, rel=1e-12)
    assert res.m == pytest.approx(12**8 / 10080, rel=1e-12)
    assert res.m == pytest.approx(4.26587e4, rel=1e-4)
    assert res.sigma**2 == pytest.approx(1 / 7, rel=1e-10)
    assert res.kappa_Y(2) == pytest.approx(6 / 7, rel=1e-10)
    assert res.q == 5


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 1.5, 1.9])
def test_match5_recovers_closed_form(a):
    res = matching.match5(TS(1.3, a, 2.0), 0.7)
    assert res.p == pytest.approx(a * a - 8 * a + 11, rel=1e-10)
    assert res.q == 6


def test_match5_infeasible():
    # a heavy bump near the origin plus mass near 1 drives k3 k5 / k4^2 far past 4/3
    def dens(u):
        return 1e-6 * u**-2.5 + 1e8 * np.exp(-(((u - 0.01) / 0.002) ** 2)) + 1.0 * (u > 0.9)

    m = levy.Custom(upper_support_=1.0, singularity_exponent_hint=1.5, density_fn=dens)
    with pytest.raises(MatchInfeasible):
        matching.match5(m, 1.0)
    # auto mode falls back to order 4 instead of failing
    res = matching.fit(m, 1.0)
    assert res.order == 4 and res.sigma > 0


def test_match_sym7_example():
    res = matching.match_sym7(TS(1, 1, 1), 1.0, 16.4674)
    assert res.s == pytest.approx(0.03527, rel=1e-3)
    assert res.q == 8 and res.symmetric


def test_match_sym9_ratio_and_p():
    k = matching.x_kappas(TS(1, 1, 1), 1.0, range(2, 11), True)
    assert k[4] * k[8] / k[6] ** 2 == pytest.approx(25 / 21, rel=1e-12)
    res = matching.match_sym9(TS(1, 1, 1), 1.0)
    assert res.p == pytest.approx((10 + math.sqrt(526)) / 2, rel=1e-10)


def test_stable_p_values():
    assert matching.stable_p_asym(1.0) == 4.0
    assert matching.stable_p_asym(1e-12) == pytest.approx(11.0)
    assert matching.stable_p_asym(1.5) == 1.25
    assert matching.stable_p_sym(1.0) == pytest.approx((10 + math.sqrt(526)) / 2, rel=1e-12)
    assert matching.stable_p_sym(1e-9) == pytest.approx((21 + math.sqrt(1153)) / 2, abs=1e-7)
    assert matching.stable_p_sym(0.5) > matching.stable_p_sym(1.5)
    with pytest.raises(DomainError):
        matching.stable_p_asym(2.0)


@settings(max_examples=40, deadline=None)
@given(ratio=st.floats(1.0001, 56 / 30 - 1e-4))
def test_solve_g_sym_inverts(ratio):
    p = matching.solve_g_sym(ratio)
    assert p > 0
    assert matching.g_sym(p) == pytest.approx(ratio, rel=1e-12)


MEASURES = [TS(1, 1, 1), TS(2, 0.5, 1), TS(0.5, 1.7, 2), levy.LogSingular(2.0),
            levy.TiltedStablePoly(a=1.2, b=1.0, n=1, r0=1.0),
            levy.Custom(upper_support_=1.0, singularity_exponent_hint=1.2, name="beta_cut",
                        params={"c": 1.0, "a": 1.2, "k": 2.0})]


@pytest.mark.parametrize("measure", MEASURES, ids=lambda m: m.family)
@pytest.mark.parametrize("symmetric", [False, True])
def test_fit_invariants(measure, symmetric):
    r = 0.3 * measure.upper_support
    res = matching.fit(measure, r, symmetric=symmetric)
    assert res.sigma**2 > 0
    assert res.s < r / (res.p + 3)
    assert validation.quadrature_match_check(measure, res) <= 1e-9
    assert max(res.residuals().values()) <= 1e-9
    assert res.q == (10 if symmetric else 6)


def test_fit_order_checks():
    with pytest.raises(DomainError):
        matching.fit(TS(1, 1, 1), 0.5, order=7, symmetric=False)
    with pytest.raises(DomainError):
        matching.fit(TS(1, 1, 1), 0.5, order=5, symmetric=True)


def test_fit_explicit_orders():
    r4 = matching.fit(TS(1, 1, 1), 0.5, order=4, p=2.0)
    assert r4.p == 2.0 and r4.q == 5
    r7 = matching.fit(TS(1, 1, 1), 0.5, order=7, symmetric=True)
    assert r7.q == 8 and r7.p > -1


def test_p_minus_one_boundary():
    res = matching.match4(TS(1, 1.5, 1), 1.0, -1.0)
    assert res.p == -1.0 and res.sigma**2 > 0


def test_finite_mass_rejected():
    finite = levy.Custom(upper_support_=1.0, singularity_exponent_hint=-0.5,
                         density_fn=lambda u: u * 0 + 1.0)
    with pytest.raises(DomainError):
        matching.fit(finite, 0.5)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.1, 10), a=st.floats(0.1, 1.9), r=st.floats(0.05, 1.0), beta=st.floats(0.1, 10))
def test_scale_equivariance(c, a, r, beta):
    base = matching.fit(TS(c, a, 1.0), r)
    # scaling jumps by beta: density c beta^a u^{-a-1} on (0, beta)
    scaled = matching.fit(TS(c * beta**a, a, beta), beta * r)
    assert scaled.p == pytest.approx(base.p, rel=1e-12)
    assert scaled.s == pytest.approx(beta * base.s, rel=1e-9)
    assert scaled.sigma == pytest.approx(beta * base.sigma, rel=1e-8)
    for j in range(2, 6):
        assert scaled.kappa_T(j) == pytest.approx(beta**j * base.kappa_T(j), rel=1e-9)


def test_json_round_trip_and_overflow():
    res = matching.fit(TS(1, 1, 1), 0.2, symmetric=True)
    back = matching.MatchedParams.from_dict(res.to_dict())
    assert back == res
    big = matching.match4(TS(1, 1, 1), 1.0, 1000.0)
    assert math.isinf(big.m) and big.to_dict()["m"] is None
    assert math.isfinite(big.kappa_T(3))
