import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pgn import levy
from pgn.errors import DomainError, NonIntegrable

TS = levy.TruncStable


def families():
    return [
        TS(c=1.0, a=1.0, r0=1.0),
        TS(c=2.5, a=0.5, r0=3.0),
        TS(c=0.7, a=1.7, r0=0.8),
        levy.LogSingular(c=2.0),
        levy.TiltedStablePoly(a=1.0, b=1.0, n=1, r0=1.0),
        levy.TiltedStablePoly(a=1.5, b=0.5, n=3, r0=2.0),
    ]


def test_partial_cumulant_examples():
    assert levy.partial_cumulant(TS(1, 1, 1), 2, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert levy.partial_cumulant(levy.LogSingular(2.0), 2, 0.1) == pytest.approx(0.0280259, rel=2e-6)


def test_tail_functionals_examples():
    assert levy.tail_mass(TS(1, 1, 1), 0.5) == pytest.approx(1.0, rel=1e-12)
    assert levy.tail_mass(TS(1, 0.5, 1), 0.25) == pytest.approx(2.0, rel=1e-12)
    assert levy.tail_mean(TS(1, 1, 1), 0.5) == pytest.approx(math.log(2), rel=1e-12)
    assert levy.tail_mean(TS(2, 0.5, 1), 0.25) == pytest.approx(2.0, rel=1e-12)
    assert levy.tail_mass(TS(1, 1, 1), 2.0) == 0.0


@pytest.mark.parametrize("measure", families(), ids=lambda m: m.family)
@pytest.mark.parametrize("j", range(2, 11))
def test_closed_form_matches_quadrature(measure, j):
    r = 0.6 * measure.upper_support
    closed = levy.partial_cumulant(measure, j, r)
    quad = levy.quad_moment(measure, j, 0.0, r)
    assert closed == pytest.approx(quad, rel=1e-8)


def test_custom_quadrature_matches_power_law():
    cu = levy.Custom(upper_support_=1.0, singularity_exponent_hint=1.0, name="power_law",
                     params={"c": 1.0, "a": 1.0})
    for j in range(2, 8):
        assert levy.partial_cumulant(cu, j, 0.5) == pytest.approx(
            levy.partial_cumulant(TS(1, 1, 1), j, 0.5), rel=1e-9)


@pytest.mark.parametrize("measure", families(), ids=lambda m: m.family)
def test_monotonicity_and_holder(measure):
    rs = np.linspace(0.05, 0.95, 12) * measure.upper_support
    k2 = [levy.partial_cumulant(measure, 2, r) for r in rs]
    tm = [levy.tail_mass(measure, r) for r in rs]
    assert all(np.diff(k2) >= 0)
    assert all(np.diff(tm) <= 0)
    cv = levy.cumulant_vector(measure, rs[5], 9)
    assert cv.holder_consistent()
    for j in range(3, 9):
        assert cv[j] ** 2 < cv[j - 1] * cv[j + 1]


def test_gamma_levy_cumulant_examples():
    assert levy.gamma_levy_cumulant(0, 1, 1, 2) == pytest.approx(2.0)
    assert levy.gamma_levy_cumulant(0, 1, 0, 2) == 0.0
    assert levy.gamma_levy_cumulant(4, 1 / 12, 12**8 / 10080, 3) == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(DomainError):
        levy.gamma_levy_cumulant(-5, 1, 1, 2)


@settings(max_examples=50, deadline=None)
@given(p=st.floats(-0.99, 40), s=st.floats(1e-3, 10), j=st.integers(2, 12))
def test_gamma_levy_ratio(p, s, j):
    ratio = levy.gamma_levy_cumulant(p, s, 1.0, j + 1) / levy.gamma_levy_cumulant(p, s, 1.0, j)
    assert ratio == pytest.approx((j + p + 1) * s, rel=1e-10)


def test_log_space_avoids_overflow():
    v = levy.log_gamma_levy_cumulant(400.0, 1e-3, 2000.0, 6)
    assert math.isfinite(v)


@pytest.mark.parametrize("a,b,n,r0", [(0.5, 1, 1, 1.0), (1.5, 1, 1, 1.0), (1.9, 0.5, 3, 2.5476)])
def test_tilted_decompose(a, b, n, r0):
    d = levy.tilted_decompose(a, b)
    assert d.n == n
    assert d.r0 == pytest.approx(r0, rel=1e-4)
    assert math.isfinite(d.residual_mass) and d.residual_mass >= 0


def test_validation_errors():
    with pytest.raises(DomainError):
        TS(1, 2.0, 1)
    with pytest.raises(DomainError):
        levy.TiltedStablePoly(a=1, b=1, n=2, r0=1)
    with pytest.raises(DomainError):
        levy.Custom(upper_support_=1.0, singularity_exponent_hint=2.0, name="power_law",
                    params={"c": 1, "a": 1})
    with pytest.raises(DomainError):
        levy.partial_cumulant(TS(1, 1, 1), 1, 0.5)


def test_custom_nonintegrable_rejected():
    with pytest.raises(NonIntegrable):
        levy.Custom(upper_support_=1.0, singularity_exponent_hint=1.9,
                    density_fn=lambda u: u ** -3.5)


def test_infinite_mass_detection():
    assert levy.has_infinite_mass(TS(1, 1, 1))
    assert levy.has_infinite_mass(levy.LogSingular(1))
    finite = levy.Custom(upper_support_=1.0, singularity_exponent_hint=-0.5,
                         density_fn=lambda u: np.ones_like(u))
    assert not levy.has_infinite_mass(finite)


@pytest.mark.parametrize("measure", families() + [
    levy.Custom(upper_support_=1.0, singularity_exponent_hint=1.2, name="beta_cut",
                params={"c": 1.0, "a": 1.2, "k": 2.0})], ids=lambda m: m.family)
def test_json_round_trip(measure):
    back = levy.measure_from_dict(measure.to_dict())
    assert back.to_dict() == measure.to_dict()
    assert levy.partial_cumulant(back, 3, 0.5 * measure.upper_support) == pytest.approx(
        levy.partial_cumulant(measure, 3, 0.5 * measure.upper_support), rel=1e-12)
