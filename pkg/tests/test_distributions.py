import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epbayes.distributions import (
    Tolerance,
    chi2_scaled_logpdf,
    f_cdf,
    f_scaled_logpdf,
    log_gamma,
    normal_cdf,
    reg_inc_beta,
    t_cdf,
    t_logpdf,
)
from epbayes.errors import DomainError
from oracles import f_density, quad_oracle, t_density

mpmath.mp.dps = 30


class TestTolerance:
    def test_defaults_valid(self):
        tol = Tolerance()
        assert tol.abs_tol > 0 and tol.rel_tol > 0 and tol.max_iter >= 1

    @pytest.mark.parametrize("kw", [dict(abs_tol=0), dict(rel_tol=-1), dict(max_iter=0), dict(abs_tol=math.nan)])
    def test_rejects_bad(self, kw):
        with pytest.raises(DomainError):
            Tolerance(**kw)


class TestLogGamma:
    def test_examples(self):
        assert log_gamma(1.0) == 0.0
        np.testing.assert_allclose(log_gamma(0.5), 0.5723649429247001, rtol=1e-14)
        np.testing.assert_allclose(log_gamma(10.0), math.log(math.factorial(9)), rtol=1e-14)

    def test_against_mpmath(self):
        xs = np.concatenate([np.logspace(-6, 6, 200), [0.5, 1.5, 2.5, 7.25]])
        got = log_gamma(xs)
        ref = np.array([float(mpmath.loggamma(mpmath.mpf(x))) for x in xs])
        # relative error, with an absolute floor where ln Gamma crosses zero
        err = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-3)
        assert err.max() <= 1e-13

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)


class TestRegIncBeta:
    def test_trivial(self):
        assert reg_inc_beta(2.0, 3.0, 0.0) == 0.0
        assert reg_inc_beta(2.0, 3.0, 1.0) == 1.0
        np.testing.assert_allclose(reg_inc_beta(0.5, 0.5, 0.5), 0.5, atol=1e-12)

    def test_against_mpmath(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = np.exp(rng.uniform(np.log(0.1), np.log(200), 2))
            x = rng.uniform()
            ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
            assert abs(reg_inc_beta(a, b, x) - ref) <= 1e-12, (a, b, x)

    def test_symmetry(self):
        a, b, x = 2.5, 7.0, 0.3
        np.testing.assert_allclose(reg_inc_beta(a, b, x), 1 - reg_inc_beta(b, a, 1 - x), atol=1e-14)

    @pytest.mark.parametrize("x", [-0.1, 1.1])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            reg_inc_beta(1.0, 1.0, x)


class TestCdfs:
    def test_symmetry_points(self):
        assert normal_cdf(0.0) == 0.5
        for nu in (1.0, 2.5, 10.0, 300.0):
            assert t_cdf(0.0, nu) == 0.5

    def test_t_against_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.uniform(-8, 8)
            nu = rng.uniform(0.5, 40)
            ref = 0.5 + math.copysign(quad_oracle(lambda s: t_density(s, nu), 0, abs(x)), x)
            assert abs(t_cdf(x, nu) - ref) <= 1e-9

    def test_f_against_quadrature(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            a, b = rng.uniform(1, 30, 2)
            x = math.exp(rng.uniform(-4, 4))
            # integrate in log x to keep the integrand smooth near zero
            ref = quad_oracle(lambda u: f_density(math.exp(u), a, b) * math.exp(u), -60, math.log(x))
            assert abs(f_cdf(x, a, b) - ref) <= 1e-9

    def test_normal_against_quadrature(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            x = rng.uniform(-8, 8)
            ref = 0.5 + math.copysign(
                quad_oracle(lambda s: math.exp(-0.5 * s * s) / math.sqrt(2 * math.pi), 0, abs(x)), x
            )
            assert abs(normal_cdf(x) - ref) <= 1e-9

    def test_far_tails(self):
        np.testing.assert_allclose(normal_cdf(-30.0), float(mpmath.ncdf(-30)), rtol=1e-12)
        ref = float(mpmath.betainc(2.0, 0.5, 0, 4 / (4 + 1e6), regularized=True) / 2)
        np.testing.assert_allclose(t_cdf(-1e3, 4.0), ref, rtol=1e-12)

    def test_monotone(self):
        x = np.linspace(-20, 20, 4001)
        for nu in (1.0, 3.0, 17.5):
            assert np.all(np.diff(t_cdf(x, nu)) >= 0)
        assert np.all(np.diff(normal_cdf(x)) >= 0)
        xf = np.logspace(-5, 5, 4001)
        for a, b in ((2.0, 2.0), (3.0, 12.0), (0.7, 40.0)):
            assert np.all(np.diff(f_cdf(xf, a, b)) >= 0)

    def test_vectorized_matches_scalar(self):
        x = np.array([-3.0, -0.5, 0.0, 1.2, 9.0])
        v = t_cdf(x, 4.0)
        assert [t_cdf(float(xi), 4.0) for xi in x] == list(v)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            t_cdf(math.nan, 3.0)
        with pytest.raises(DomainError):
            normal_cdf(math.inf)
        with pytest.raises(DomainError):
            f_cdf(1.0, 0.0, 2.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.5, 500))
    def test_t_reflection(self, x, nu):
        assert abs(t_cdf(x, nu) + t_cdf(-x, nu) - 1.0) <= 1e-13

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(0.5, 60), st.floats(0.5, 60))
    def test_f_reciprocal(self, x, a, b):
        # X ~ F(a, b)  =>  1/X ~ F(b, a)
        assert abs(f_cdf(x, a, b) - (1.0 - f_cdf(1.0 / x, b, a))) <= 1e-12


class TestDensities:
    def test_examples(self):
        np.testing.assert_allclose(f_scaled_logpdf(1.0, 1.0, 2.0, 2.0), math.log(0.25), rtol=1e-14)
        np.testing.assert_allclose(chi2_scaled_logpdf(1.0, 1.0, 2.0), -1.0, rtol=1e-14)

    @pytest.mark.parametrize("nu_a", range(2, 11))
    def test_scaled_f_integrates_to_one(self, nu_a):
        for nu_b in range(2, 11):
            for lam in (0.3, 2.0):
                g = lambda u: math.exp(f_scaled_logpdf(math.exp(u), lam, nu_a, nu_b) + u)
                total = quad_oracle(g, -80, 80)
                assert abs(total - 1.0) <= 1e-6, (nu_a, nu_b, lam)

    @pytest.mark.parametrize("nu", [1, 2, 3, 5, 8, 10, 2.5])
    def test_scaled_chi2_integrates_to_one(self, nu):
        for sig2 in (0.2, 6.0):
            g = lambda u: math.exp(chi2_scaled_logpdf(math.exp(u), sig2, nu) + u)
            assert abs(quad_oracle(g, -80, 20) - 1.0) <= 1e-6

    def test_scaled_f_matches_ratio_of_chi2(self):
        # lhat = lam * F  <=>  density is f_F(lhat / lam) / lam
        for lhat, lam, a, b in [(0.4, 2.0, 3, 7), (5.0, 0.5, 8, 2), (1.0, 1.0, 4, 4)]:
            np.testing.assert_allclose(
                math.exp(f_scaled_logpdf(lhat, lam, a, b)), f_density(lhat / lam, a, b) / lam, rtol=1e-13
            )

    def test_t_logpdf(self):
        np.testing.assert_allclose(math.exp(t_logpdf(0.7, 3.5)), t_density(0.7, 3.5), rtol=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            f_scaled_logpdf(0.0, 1.0, 2.0, 2.0)
        with pytest.raises(DomainError):
            chi2_scaled_logpdf(1.0, -1.0, 2.0)
