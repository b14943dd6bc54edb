import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebitcov.errors import DomainError
from onebitcov.gauss import bvn_orthant, bvn_pdf, g_fn, hermite, q, q_inv

from oracles import bvn_density_mp, central_diff, hermite_rodrigues, orthant_dblquad, orthant_quad

finite = st.floats(-6, 6, allow_nan=False)
corr = st.floats(-0.995, 0.995, allow_nan=False)


class TestTail:
    def test_median(self):
        assert q(0.0) == 0.5
        assert q_inv(0.5) == 0.0

    def test_far_tail(self):
        assert q(40.0) < 1e-300

    def test_against_quadrature(self):
        from scipy import integrate

        ref, _ = integrate.quad(lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi), 2.0, np.inf,
                                epsabs=1e-15)
        npt.assert_allclose(q(2.0), ref, rtol=1e-12)
        npt.assert_allclose(q_inv(0.02275013), 2.0, atol=1e-6)

    def test_round_trip(self):
        npt.assert_allclose(q_inv(q(1.234)), 1.234, atol=1e-10)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_q_inv_domain(self, bad):
        with pytest.raises(DomainError):
            q_inv(bad)

    @pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
    def test_q_domain(self, bad):
        with pytest.raises(DomainError):
            q(bad)

    @given(st.floats(1e-12, 1 - 1e-12))
    def test_inverse_property(self, p):
        assert abs(q(q_inv(p)) - p) <= 1e-12 * max(p, 1e-3) + 1e-16

    @given(finite, finite)
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert q(lo) >= q(hi)


class TestDensity:
    def test_origin(self):
        npt.assert_allclose(bvn_pdf(0, 0, 0), 1 / (2 * math.pi), rtol=1e-15)

    def test_independent(self):
        npt.assert_allclose(bvn_pdf(1, -1, 0), math.exp(-1) / (2 * math.pi), rtol=1e-15)

    def test_high_precision(self):
        npt.assert_allclose(bvn_pdf(0.5, 0.3, 0.6), bvn_density_mp(0.5, 0.3, 0.6), rtol=1e-14)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.2])
    def test_domain(self, rho):
        with pytest.raises(DomainError):
            bvn_pdf(0.1, 0.2, rho)

    @given(finite, finite, corr)
    def test_sign_flip(self, a, b, r):
        npt.assert_allclose(bvn_pdf(a, b, r), bvn_pdf(-a, b, -r), rtol=1e-12)


class TestOrthant:
    def test_independent_halves(self):
        assert bvn_orthant(0, 0, 0) == pytest.approx(0.25, abs=1e-15)

    @pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.5, 0.99])
    def test_sheppard(self, rho):
        npt.assert_allclose(bvn_orthant(0, 0, rho), 0.25 + math.asin(rho) / (2 * math.pi), atol=1e-15)

    def test_reference_point(self):
        npt.assert_allclose(bvn_orthant(0.8, -0.2, 0.6), orthant_dblquad(0.8, -0.2, 0.6), atol=1e-10)

    def test_against_quadrature_grid(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            h, k = rng.uniform(-4, 4, 2)
            rho = rng.uniform(-0.999, 0.999)
            assert abs(bvn_orthant(h, k, rho) - orthant_quad(h, k, rho)) < 1e-10

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(12)
        h, k = rng.normal(size=(2, 50))
        r = rng.uniform(-0.99, 0.99, 50)
        vec = bvn_orthant(h, k, r)
        npt.assert_allclose(vec, [bvn_orthant(a, b, c) for a, b, c in zip(h, k, r)], rtol=1e-14)

    def test_degenerate_limits(self):
        npt.assert_allclose(bvn_orthant(0.3, -0.4, 1.0), q(0.3), rtol=1e-15)
        npt.assert_allclose(bvn_orthant(-0.3, -0.4, -1.0), q(-0.3) - q(0.4), rtol=1e-14)
        assert bvn_orthant(0.3, 0.4, -1.0) == 0.0

    @pytest.mark.parametrize("rho", [1.0001, -1.5, np.nan])
    def test_domain(self, rho):
        with pytest.raises(DomainError):
            bvn_orthant(0.0, 0.0, rho)

    @given(finite, finite)
    def test_product_at_zero_corr(self, h, k):
        npt.assert_allclose(bvn_orthant(h, k, 0.0), q(h) * q(k), rtol=1e-12, atol=1e-300)

    @given(finite, finite, corr, st.floats(0, 2))
    @settings(max_examples=200)
    def test_monotone_and_bounded(self, h, k, r, dh):
        p = bvn_orthant(h, k, r)
        assert 0.0 <= p <= min(q(h), q(k)) + 1e-15
        assert bvn_orthant(h + dh, k, r) <= p + 1e-15
        assert bvn_orthant(h, k + dh, r) <= p + 1e-15

    def test_price_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            h, k = rng.uniform(-2.5, 2.5, 2)
            r = rng.uniform(-0.95, 0.95)
            fd = central_diff(lambda x: bvn_orthant(h, k, x), r, 2e-4)
            npt.assert_allclose(fd, bvn_pdf(h, k, r), rtol=1e-6, atol=1e-12)


class TestHermite:
    def test_low_orders(self):
        assert hermite(0, 3.7) == 1.0
        assert hermite(2, 1.0) == 2.0

    def test_rodrigues(self):
        npt.assert_allclose(hermite(5, 0.8), hermite_rodrigues(5, 0.8), rtol=1e-13)
        npt.assert_allclose(hermite(9, -1.3), hermite_rodrigues(9, -1.3), rtol=1e-12)

    def test_negative_order(self):
        with pytest.raises(DomainError):
            hermite(-1, 0.3)


class TestGKernel:
    def test_zero_first_argument(self):
        npt.assert_allclose(g_fn(0.0, 0.7, 0.4), -0.4 * bvn_pdf(0.0, 0.7, 0.4), rtol=1e-15)

    def test_zero_corr(self):
        ref = 1.1 / math.sqrt(2 * math.pi) * math.exp(-0.5 * 1.1**2) * q(-0.3)
        npt.assert_allclose(g_fn(1.1, -0.3, 0.0), ref, rtol=1e-14)

    def test_scale_derivative(self):
        # sigma1 * d/dsigma1 of the orthant probability at fixed sigma12
        v, s1 = 1.2, 1.0
        s2 = v / 0.7
        s12 = 0.5 * s1 * s2

        def p12(x):
            return bvn_orthant(v / x, v / s2, s12 / (x * s2))

        fd = central_diff(p12, s1, 1e-4) * s1
        npt.assert_allclose(fd, g_fn(1.2, 0.7, 0.5), rtol=1e-6)

    @given(finite, finite, corr)
    def test_antisymmetry(self, a, b, r):
        npt.assert_allclose(g_fn(a, b, r), -g_fn(-a, b, -r), atol=1e-12)
