import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gigkdv import dist, specfun
from gigkdv.errors import DomainError

LAWS = [
    dist.GigParams(0.5, 1.0, 1.0),
    dist.GigParams(-2.3, 0.4, 3.0),
    dist.GigParams(3.0, 8.0, 0.2),
    dist.GammaParams(1.7, 2.2),
    dist.GammaParams(0.4, 0.9),
    dist.InvGammaParams(0.9, 1.4),
]


def quad_integral(law, weight=None, lo=0.0, hi=np.inf):
    """Adaptive-quadrature oracle for integrals of the density."""
    mode = math.exp(dist._weight_mode(law))

    def f(x):
        v = math.exp(dist.log_pdf(law, x))
        return v * weight(x) if weight else v

    left, _ = integrate.quad(f, lo, mode, limit=200)
    right, _ = integrate.quad(f, mode, hi, limit=200)
    return left + right


class TestLogPdf:
    def test_gig_frozen_example(self):
        # GIG(0.5, 1, 1) at x = 1: -log(2 K_{1/2}(2)) - 2
        want = -math.log(2.0 * specfun.bessel_k(0.5, 2.0)) - 2.0
        assert dist.log_pdf(dist.GigParams(0.5, 1.0, 1.0), 1.0) == pytest.approx(
            want, rel=1e-14)

    def test_gamma_frozen_example(self):
        want = math.log(9.0 * math.exp(-3.0))
        assert dist.log_pdf(dist.GammaParams(2.0, 3.0), 1.0) == pytest.approx(
            want, rel=1e-14)

    @pytest.mark.parametrize("law", LAWS, ids=str)
    def test_density_normalized(self, law):
        assert quad_integral(law) == pytest.approx(1.0, abs=1e-9)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            dist.log_pdf(LAWS[0], 0.0)
        with pytest.raises(DomainError):
            dist.log_pdf(LAWS[0], -1.0)

    @given(lam=st.floats(-4.0, 4.0), a=st.floats(0.1, 8.0),
           b=st.floats(0.1, 8.0), x=st.floats(1e-3, 1e3))
    def test_reciprocity_pointwise(self, lam, a, b, x):
        law = dist.GigParams(lam, a, b)
        lhs = dist.log_pdf(law, x)
        rhs = dist.log_pdf(dist.reciprocal_law(law), 1.0 / x) - 2.0 * math.log(x)
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestCdf:
    def test_limits(self):
        # the lower limit uses x = 1e-30: Gamma laws with lam < 1 carry
        # power-law mass near zero, so tiny but nonzero values are exact
        for law in LAWS:
            assert dist.cdf(law, 1e-30) <= 1e-9
            assert dist.cdf(law, 1e30) == pytest.approx(1.0, abs=1e-9)

    def test_exponential_special_case(self):
        xs = np.geomspace(0.01, 10.0, 200)
        got = dist.cdf(dist.GammaParams(1.0, 2.0), xs)
        assert np.max(np.abs(got - (1.0 - np.exp(-2.0 * xs)))) <= 1e-10

    @pytest.mark.parametrize("law", LAWS, ids=str)
    def test_matches_quadrature(self, law):
        for x in (0.2, 1.0, 4.0):
            assert dist.cdf(law, x) == pytest.approx(
                quad_integral(law, hi=x), abs=1e-9)

    def test_monotone(self):
        xs = np.geomspace(1e-3, 1e3, 400)
        for law in LAWS[:3]:
            assert np.all(np.diff(dist.cdf(law, xs)) >= 0.0)

    def test_median_and_reciprocity(self):
        law = dist.GigParams(1.2, 0.7, 2.0)
        xs = np.geomspace(0.05, 30.0, 300)
        v = dist.cdf(law, xs)
        med = xs[np.searchsorted(v, 0.5)]
        assert dist.cdf(law, med) == pytest.approx(0.5, abs=0.02)
        rec = dist.reciprocal_law(law)
        assert np.max(np.abs(v + dist.cdf(rec, 1.0 / xs) - 1.0)) <= 1e-10

    def test_weak_limits(self):
        xs = np.geomspace(0.05, 20.0, 50)
        lam, rate = 1.2, 0.8
        d = np.abs(dist.cdf(dist.GigParams(lam, rate, 1e-8), xs)
                   - dist.cdf(dist.GammaParams(lam, rate), xs))
        assert np.max(d) <= 1e-3
        d = np.abs(dist.cdf(dist.GigParams(-lam, 1e-8, rate), xs)
                   - dist.cdf(dist.InvGammaParams(lam, rate), xs))
        assert np.max(d) <= 1e-3


class TestExtLaplace:
    def test_unit_at_zero(self):
        assert dist.ext_laplace(dist.GigParams(0.3, 2.0, 1.0), 0.0, 0.0, 0.0) == 1.0

    def test_monte_carlo_oracle(self):
        law = dist.GigParams(0.3, 2.0, 1.0)
        xs = dist.sample(law, 1313, 1_000_000)
        f = xs ** 1.5 * np.exp(-1.0 * xs - 0.5 / xs)
        se = f.std() / 1000.0
        assert abs(f.mean() - dist.ext_laplace(law, 1.5, -1.0, -0.5)) <= 4.0 * se

    def test_reciprocal_substitution(self):
        law = dist.GigParams(-1.1, 0.7, 2.5)
        rec = dist.reciprocal_law(law)
        for s, sg, th in ((1.5, -1.0, -0.5), (0.0, -2.0, 0.3), (-0.7, 0.2, -1.0)):
            assert dist.ext_laplace(law, s, sg, th) == pytest.approx(
                dist.ext_laplace(rec, -s, th, sg), rel=1e-13)

    def test_matches_quadrature(self):
        law = dist.GigParams(0.3, 2.0, 1.0)
        s, sg, th = 0.0, -0.7, -1.1
        oracle = quad_integral(law, weight=lambda x: math.exp(sg * x + th / x))
        assert dist.ext_laplace(law, s, sg, th) == pytest.approx(oracle, rel=1e-8)

    def test_moment_is_mean(self):
        law = dist.GigParams(0.9, 1.3, 2.1)
        m = dist.gig_moment(law, 1.0)
        oracle = quad_integral(law, weight=lambda x: x)
        assert m == pytest.approx(oracle, rel=1e-9)

    def test_tilt_domain(self):
        law = dist.GigParams(0.3, 2.0, 1.0)
        with pytest.raises(DomainError):
            dist.ext_laplace(law, 0.0, 2.0, 0.0)
        with pytest.raises(DomainError):
            dist.ext_laplace(law, 0.0, 0.0, 1.0)


class TestTilt:
    def test_identity(self):
        law = dist.GigParams(1.0, 2.0, 2.0)
        assert dist.tilt(law, 0.0, 0.0, 0.0) == law

    def test_parameter_shift(self):
        assert dist.tilt(dist.GigParams(1.0, 2.0, 2.0), 1.0, 1.0, 0.5) == \
            dist.GigParams(2.0, 1.0, 1.5)

    def test_pointwise_density(self):
        # tilted-and-renormalized density equals the shifted law's density
        law = dist.GigParams(1.0, 2.0, 2.0)
        s, at, bt = 1.0, 1.0, 0.5
        out = dist.tilt(law, s, at, bt)
        log_const = dist.ext_laplace_log(law, s, at, bt)
        for x in (0.1, 0.7, 1.0, 3.0, 12.0):
            lhs = (dist.log_pdf(law, x) + s * math.log(x) + at * x + bt / x
                   - log_const)
            assert lhs == pytest.approx(dist.log_pdf(out, x), abs=1e-10)

    def test_composition(self):
        law = dist.GigParams(0.2, 3.0, 4.0)
        two_step = dist.tilt(dist.tilt(law, 0.5, 1.0, 1.0), -0.2, 0.5, 2.0)
        want = dist.tilt(law, 0.3, 1.5, 3.0)
        assert two_step.lam == pytest.approx(want.lam, abs=1e-15)
        assert two_step.a == pytest.approx(want.a, abs=1e-15)
        assert two_step.b == pytest.approx(want.b, abs=1e-15)

    def test_bounds(self):
        with pytest.raises(DomainError):
            dist.tilt(dist.GigParams(1.0, 2.0, 2.0), 0.0, 2.0, 0.0)


class TestSampling:
    @pytest.mark.parametrize("law", LAWS, ids=str)
    def test_ks_against_cdf(self, law):
        xs = dist.sample(law, 2026, 30_000)
        assert stats.kstest(xs, lambda v: dist.cdf(law, v)).pvalue > 0.01

    def test_deterministic(self):
        law = dist.GigParams(-1.0, 1.0, 2.0)
        assert np.array_equal(dist.sample(law, 5, 100), dist.sample(law, 5, 100))
        assert not np.array_equal(dist.sample(law, 5, 100),
                                  dist.sample(law, 6, 100))

    def test_mean_within_four_se(self):
        law = dist.GigParams(0.9, 1.3, 2.1)
        xs = dist.sample(law, 77, 1_000_000)
        want = dist.gig_moment(law, 1.0)
        assert abs(xs.mean() - want) <= 4.0 * xs.std() / 1000.0

    def test_reciprocal_draws(self):
        law = dist.GigParams(2.0, 3.0, 5.0)
        rec = dist.reciprocal_law(law)
        assert rec == dist.GigParams(-2.0, 5.0, 3.0)
        assert dist.reciprocal_law(rec) == law
        xs = dist.sample(law, 11, 50_000)
        assert stats.kstest(1.0 / xs, lambda v: dist.cdf(rec, v)).pvalue > 0.01

    def test_gamma_mean(self):
        law = dist.GammaParams(1.7, 2.2)
        xs = dist.sample(law, 99, 1_000_000)
        assert abs(xs.mean() - 1.7 / 2.2) <= 4.0 * xs.std() / 1000.0

    def test_fixed_point_symmetric(self):
        law = dist.GigParams(0.0, 2.0, 2.0)
        assert dist.reciprocal_law(law) == law


def test_make_law_limits():
    assert dist.make_law(0.5, 2.0, 1.0) == dist.GigParams(0.5, 2.0, 1.0)
    assert dist.make_law(0.5, 2.0, 0.0) == dist.GammaParams(0.5, 2.0)
    assert dist.make_law(-0.5, 0.0, 2.0) == dist.InvGammaParams(0.5, 2.0)
    with pytest.raises(DomainError):
        dist.make_law(0.5, 0.0, 0.0)
    with pytest.raises(DomainError):
        dist.make_law(-0.5, 2.0, 0.0)  # Gamma limit needs lam > 0


def test_check_battery_full():
    # the 20-point sampler battery at its production sample size
    rows = dist.check_battery(ks_n=100_000)
    assert all(bool(r[-1]) for r in rows), rows
