import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate, stats

from sheppext import asymptotics as A
from sheppext.errors import DomainError
from sheppext.models import (
    IncrementVariance,
    LocalStructure,
    StationaryCovariance,
    local_structure,
)

pytestmark = pytest.mark.invariant

mp.mp.dps = 50


def mp_tail(u):
    return mp.erfc(mp.mpf(u) / mp.sqrt(2)) / 2


# --- normal tail ------------------------------------------------------------


def test_normal_tail_basic_values():
    assert A.normal_tail(0.0) == 0.5
    assert A.normal_tail(1.7) + A.normal_tail(-1.7) == pytest.approx(1.0, abs=1e-16)
    assert A.normal_tail(3.0) == pytest.approx(1.349898e-3, abs=1e-9)


def test_normal_tail_relative_error_where_representable():
    # Psi underflows to subnormals past u ~ 37.5, so 1e-14 relative is
    # checked on [-37, 37] and the log form covers the rest of [-40, 40]
    us = np.concatenate([np.linspace(-37, 37, 741), [1e-8, 0.3, 36.999]])
    worst = max(abs(A.normal_tail(u) / float(mp_tail(u)) - 1) for u in us)
    assert worst < 1e-14


def test_log_normal_tail_full_range():
    # for u < -37.5 the log itself is below the smallest normal double
    for u in np.linspace(-40, 40, 801):
        with mp.workdps(800):
            ref = mp.log(mp_tail(u))
        got = A.log_normal_tail(u)
        if abs(ref) > 1e-300:
            assert abs(got / float(ref) - 1) < 1e-14, u
        else:
            assert abs(got - float(ref)) < 1e-300, u


def test_normal_tail_full_range_as_stated():
    # the stated [-40, 40] range includes values below the smallest double
    worst = 0.0
    for u in np.linspace(-40, 40, 161):
        ref = mp_tail(u)
        got = A.normal_tail(u)
        worst = max(worst, float(abs(mp.mpf(got) / ref - 1)))
    assert worst < 1e-14


def test_normal_tail_vectorized():
    u = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(A.normal_tail(u), [A.normal_tail(x) for x in u], rtol=0)


# --- tail constants ---------------------------------------------------------


def test_tail_constant_fbm_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(10):
        H = rng.choice([0.5, 1.0 / 2])
        a = rng.uniform(0.1, 1.0)
        b = a + rng.uniform(0.1, 2.0)
        ta = A.tail_constant(local_structure(IncrementVariance.fbm(H), a, b))
        ref = 1.0 * 0.5 ** (1 / H) * (1 / a - 1 / b)
        assert ta.C == pytest.approx(ref, rel=1e-10)


def test_tail_constant_with_supplied_pickands():
    for H in (0.3, 0.75):
        ta = A.tail_constant(local_structure(IncrementVariance.fbm(H), 0.5, 2.0), pickands_sq=0.7)
        assert ta.C == pytest.approx(A.fbm_constant(H, 0.5, 2.0, 0.7), rel=1e-10)
    with pytest.raises(ValueError):
        A.tail_constant(local_structure(IncrementVariance.fbm(0.3), 0.5, 2.0))


def test_tail_constant_unit_g():
    ls = LocalStructure(2.0, lambda t: 1.0, 0.5, 1.5)
    assert A.tail_constant(ls).C == pytest.approx(1 / math.pi, rel=1e-14)


def test_tail_probability_brownian_u5():
    ta = A.tail_constant(local_structure(IncrementVariance.fbm(0.5), 0.5, 1.0))
    ref = 0.25 * 5**4 * float(mp_tail(5))
    assert A.tail_probability_asym(ta, 5.0) == pytest.approx(ref, rel=1e-13)
    assert A.tail_probability_asym(ta.with_horizon(2.0), 5.0) == pytest.approx(2 * ref, rel=1e-15)


def test_tail_probability_decreasing_and_positive_u():
    ta = A.tail_asymptote_for(StationaryCovariance.fractional_ou(1.0), 0.5, 1.0, T=3.0)
    vals = A.tail_probability_asym(ta, np.linspace(4, 12, 50))
    assert np.all(np.diff(vals) < 0)
    for alpha in (0.5, 1.0, 2.0):
        ta = A.TailAsymptote(1.0, alpha, 0.5, 1.0)
        u = np.linspace(2 * math.sqrt(4 / alpha), 30, 200)
        assert np.all(np.diff(A.excursion_rate(ta, u)) < 0)
    with pytest.raises(ValueError):
        A.tail_probability_asym(ta, 0.0)


def test_prop31_fou_quadrature_oracle():
    m = StationaryCovariance.fractional_ou(1.0)
    ref = 0.25 * mp.quad(lambda t: (1 - mp.e**-t) ** -2, [1, 2])
    assert A.prop31_constant(m, 1.0, 2.0) == pytest.approx(float(ref), rel=1e-10)


def test_route_equivalence_random_draws():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.uniform(0.2, 1.0)
        b = a + rng.uniform(0.2, 2.0)
        h2 = rng.uniform(0.3, 2.0)
        models = [
            StationaryCovariance.fractional_ou(rng.uniform(0.2, 2.0)),
            StationaryCovariance.generalized_cauchy(rng.uniform(0.2, 2.0), rng.uniform(0.2, 3.0)),
            IncrementVariance.fbm(rng.uniform(0.1, 0.9)),
        ]
        w = rng.uniform(0.1, 0.9)
        h1 = rng.uniform(0.1, 0.5)
        models.append(IncrementVariance.mixed_fbm([w, math.sqrt(1 - w * w)], [h1, h1 + rng.uniform(0.05, 0.4)]))
        for m in models:
            generic = A.tail_asymptote_for(m, a, b, pickands_sq=h2).C
            special = A.specialized_constant(m, a, b, pickands_sq=h2)
            assert special == pytest.approx(generic, rel=1e-10)
        generic_tail = A.tail_probability_asym(A.tail_asymptote_for(models[2], a, b, 3.0, h2), 2.5)
        assert A.tail_prop32(models[2], a, b, 3.0, 2.5, h2) == pytest.approx(generic_tail, rel=1e-10)
        generic_tail = A.tail_probability_asym(A.tail_asymptote_for(models[0], a, b, 3.0, h2), 2.5)
        assert A.tail_prop31(models[0], a, b, 3.0, 2.5, h2) == pytest.approx(generic_tail, rel=1e-10)


def test_integrated_route_equivalence():
    z = StationaryCovariance.generalized_cauchy(1.2, 0.5)
    m = IncrementVariance.integrated(z)
    generic = A.tail_asymptote_for(m, 0.5, 1.5).C
    assert A.integrated_constant(z, 0.5, 1.5) == pytest.approx(generic, rel=1e-8)


def test_mixed_fbm_constant_and_half_variant():
    m = IncrementVariance.mixed_fbm([0.6, 0.8], [0.3, 0.7])
    H = 0.3
    ref = (0.36 / 2) ** (1 / H) * mp.quad(lambda t: (0.36 * t**0.6 + 0.64 * t**1.4) ** (-1 / H), [0.5, 1.0])
    assert A.prop32_constant(m, 0.5, 1.0, pickands_sq=1.0) == pytest.approx(float(ref), rel=1e-10)
    half = A.mixed_fbm_constant_half([0.6, 0.8], [0.3, 0.7], 0.5, 1.0, pickands_sq=1.0)
    assert half == pytest.approx(float(ref) / 0.36 ** (1 / H), rel=1e-10)
    one = A.mixed_fbm_constant_half([1.0], [0.3], 0.5, 1.0, pickands_sq=1.0)
    assert one == pytest.approx(A.prop32_constant(IncrementVariance.fbm(0.3), 0.5, 1.0, 1.0), rel=1e-10)


# --- normalizers ------------------------------------------------------------


def test_normalizers_basic():
    ta = A.tail_asymptote_for(IncrementVariance.fbm(0.5), 0.5, 1.0)
    assert A.normalizers(ta, math.exp(8)).a_T == pytest.approx(4.0, rel=1e-15)
    with pytest.raises(DomainError):
        A.normalizers(ta, math.e)
    with pytest.raises(ValueError):
        A.normalizers(ta, 100.0, convention="other")


def test_unscaled_convention_matches_fbm_formula():
    for H in (0.3, 0.5, 0.8):
        ta = A.tail_constant(local_structure(IncrementVariance.fbm(H), 0.5, 1.0), pickands_sq=0.9)
        nz = A.normalizers(ta, 1e6, convention="unscaled")
        aT, bT = A.fbm_normalizers(H, 0.5, 1.0, 1e6, pickands_sq=0.9)
        assert nz.a_T == aT and nz.b_T == pytest.approx(bT, rel=1e-15)


def test_exact_convention_shift():
    ta = A.tail_asymptote_for(IncrementVariance.fbm(0.5), 0.5, 1.0)
    ex = A.normalizers(ta, 1e6)
    pa = A.normalizers(ta, 1e6, convention="unscaled")
    assert (ex.b_T - pa.b_T) * ex.a_T == pytest.approx(1.5 * math.log(2.0), rel=1e-12)
    # without K the rate tends to 2^(2/alpha - 1/2) e^-x instead of e^-x
    T = 1e300
    ratio = T * A.excursion_rate(ta, A.normalizers(ta, T, convention="unscaled").threshold(0.0))
    exact = T * A.excursion_rate(ta, A.normalizers(ta, T).threshold(0.0))
    assert ratio / exact == pytest.approx(2**1.5, rel=0.02)


def test_normalizer_limit_as_stated():
    # T w(x/a_T + b_T) -> e^-x: relative error below 5% at T = 1e9 and
    # decreasing along 1e3, 1e5, 1e7, 1e9
    ta = A.tail_asymptote_for(IncrementVariance.fbm(0.5), 0.5, 1.0)
    for x in (-2.0, 0.0, 2.0):
        errs = []
        for T in (1e3, 1e5, 1e7, 1e9):
            u = A.normalizers(ta, T).threshold(x)
            errs.append(abs(T * A.excursion_rate(ta, u) / math.exp(-x) - 1))
        assert errs[-1] < 0.05, (x, errs)
        assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:])), (x, errs)


def test_normalizer_limit_slow_convergence():
    ta = A.tail_asymptote_for(IncrementVariance.fbm(0.5), 0.5, 1.0)
    for x in (-2.0, 0.0, 2.0):
        err = [abs(T * A.excursion_rate(ta, A.normalizers(ta, T).threshold(x)) / math.exp(-x) - 1)
               for T in (1e20, 1e80, 1e300)]
        assert err[-1] < 0.02 and err[2] < err[0]


# --- limit law --------------------------------------------------------------


def test_limit_cdf_gumbel():
    assert A.limit_cdf(0.0) == pytest.approx(math.exp(-1), abs=1e-16)
    x = np.linspace(-5, 10, 301)
    np.testing.assert_allclose(A.limit_cdf(x, 0.0), np.exp(-np.exp(-x)), atol=1e-12, rtol=0)


def test_limit_cdf_quadrature_vs_adaptive():
    # adaptive Gauss-Kronrod as the independent reference
    for x, r in ((1.0, 0.5), (-1.0, 0.25), (2.0, 1.0), (0.0, 4.0)):
        def f(z):
            with np.errstate(over="ignore"):
                return math.exp(-math.exp(min(-x - r + math.sqrt(2 * r) * z, 700.0))) * stats.norm.pdf(z)

        ref, _ = integrate.quad(f, -12, 12, points=[0.0], epsabs=1e-14, epsrel=1e-13, limit=200)
        # 64 Hermite nodes give about 2e-11 for r <= 1
        assert A.limit_cdf(x, r) == pytest.approx(ref, abs=1e-10)
        assert A.limit_cdf(x, r, method="adaptive") == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("r", [0.0, 0.25, 1.0, 4.0])
def test_limit_cdf_monotone(r):
    x = np.linspace(-15, 15, 1000)
    F = A.limit_cdf(x, r)
    assert np.all(np.diff(F) >= 0)
    assert np.all((F >= 0) & (F <= 1))


def test_limit_cdf_limits_as_stated():
    # stated: within 1e-8 of 0 and 1 at x = -15 and +15 for r in {0, 0.25, 1, 4}.
    # 1 - G_r(15) ~ e^-15 = 3.06e-7 for every r, so the upper check cannot hold
    bad = []
    for r in (0.0, 0.25, 1.0, 4.0):
        lo, hi = A.limit_cdf(-15.0, r), 1 - A.limit_cdf(15.0, r)
        if lo >= 1e-8 or hi >= 1e-8:
            bad.append((r, lo, hi))
    assert not bad, bad


@pytest.mark.parametrize("r", [0.0, 0.25, 1.0, 4.0])
def test_limit_cdf_upper_tail_asymptote(r):
    # 1 - G_r(x) = E exp(-x - r + sqrt(2r) N) (1 + O(e^-x)) = e^-x (1 + O(e^-x))
    for x in (15.0, 20.0):
        assert 1 - A.limit_cdf(x, r) == pytest.approx(math.exp(-x), rel=1e-4 + 2 * math.exp(-x + 4 * r))


def test_limit_cdf_rejects_negative_r():
    with pytest.raises(ValueError):
        A.limit_cdf(0.0, -0.1)
