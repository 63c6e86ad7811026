import math

import numpy as np
import pytest

from pgn import levy, matching, rng, validation
from pgn.errors import EmptySample, InsufficientSample


def gen(seed=0):
    return rng.RngStream(seed, 0).generator()


def check(est, targets):
    for ce in est:
        assert abs(ce.z(targets[ce.order])) < 5, (ce, targets[ce.order])


def test_gaussian_cumulants():
    x = gen(1).normal(0, 2, 1_000_000)
    check(validation.empirical_cumulants(x), {2: 4, 3: 0, 4: 0, 5: 0, 6: 0})


def test_poisson_cumulants():
    x = gen(2).poisson(3.0, 1_000_000).astype(float)
    check(validation.empirical_cumulants(x), {j: 3.0 for j in range(2, 7)})


def test_gamma_cumulants():
    k, th = 2.0, 1.5
    x = gen(3).gamma(k, th, 1_000_000)
    check(validation.empirical_cumulants(x),
          {j: math.factorial(j - 1) * k * th**j for j in range(2, 7)})


def test_cumulant_errors():
    with pytest.raises(InsufficientSample):
        validation.empirical_cumulants(np.ones(100))
    with pytest.raises(ValueError):
        validation.empirical_cumulants(np.ones(100_000), j_max=7)


def test_ks():
    a = gen(4).standard_normal(200_000)
    assert validation.ks_two_sample(a, a) == 0.0
    b = gen(5).standard_normal(200_000) + 1.0
    assert validation.ks_two_sample(a, b) == pytest.approx(0.3829, abs=0.01)
    res = validation.ks_two_sample(np.array([0.0, 1.0]), np.array([0.5]), detail=True)
    assert res.statistic == pytest.approx(0.5)
    with pytest.raises(EmptySample):
        validation.ks_two_sample([], [1.0])
    assert validation.ks_noise_floor(10**6, 10**6) == pytest.approx(0.8687 * math.sqrt(2e-6))


def test_quadrature_match_check_detects_perturbation():
    m = levy.TruncStable(1, 1, 1)
    p = matching.fit(m, 0.5)
    assert validation.quadrature_match_check(m, p) < 1e-9
    bad = matching.MatchedParams(**{**p.__dict__, "s": p.s * 1.01})
    assert validation.quadrature_match_check(m, bad) > 1e-3


def test_wls_slope_exact():
    x = np.array([0.4, 0.2, 0.1, 0.05])
    y = 3.0 * x**1.5
    s, se = validation.wls_slope(x, y, 0.01 * y)
    assert s == pytest.approx(1.5, abs=1e-10)


def test_rate_study_small(tmp_path):
    m = levy.TruncStable(1, 1.5, 1)
    res = validation.rate_study(m, [0.4, 0.2], 20_000, seed=3, reference_factor=10)
    assert len(res.dks_pgn) == 2 and res.r_ref == pytest.approx(0.02)
    assert all(0 <= d <= 1 for d in res.dks_pgn + res.dks_normal)
    res.to_csv(tmp_path / "rate.csv")
    assert (tmp_path / "rate.csv").read_text().count("\n") == 3
    with pytest.raises(ValueError):
        validation.rate_study(m, [0.1, 0.2], 1000, seed=0)
