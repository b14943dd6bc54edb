import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from onebitcov.quantizer import (
    OneBitBatch,
    PairParams,
    ThresholdSchedule,
    quantize_complex,
    quantize_real,
    sample_complex_gaussian,
    sample_gaussian,
)


class TestPairParams:
    def test_derived(self):
        p = PairParams(0.25, 0.6, -0.08)
        npt.assert_allclose(p.rho, -0.08 / 0.15)
        npt.assert_allclose(p.cov(), [[0.0625, -0.08], [-0.08, 0.36]])
        npt.assert_array_equal(p.theta, [0.25, 0.6, -0.08])

    @pytest.mark.parametrize("args", [(0.0, 1.0, 0.0), (1.0, -1.0, 0.0), (1.0, 1.0, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            PairParams(*args)

    def test_shifted(self):
        p = PairParams(0.25, 0.6, -0.08).shifted(0.15)
        npt.assert_allclose([p.sigma1**2, p.sigma2**2, p.sigma12], [0.2125, 0.51, -0.08])


class TestSchedules:
    def test_staircase_levels(self):
        s = ThresholdSchedule.staircase([0.1, 0.2, 0.3, 0.4], 8)
        npt.assert_array_equal(s.nominal()[0], [0.1, 0.1, 0.2, 0.2, 0.3, 0.3, 0.4, 0.4])
        assert s.n_intervals == 4

    def test_staircase_needs_divisible_length(self):
        with pytest.raises(ValueError):
            ThresholdSchedule.staircase([0.1, 0.2, 0.3], 10)

    def test_single_step_equals_constant(self):
        a = ThresholdSchedule.staircase([0.5], 100).materialize(3)
        b = ThresholdSchedule.constant(0.5, 100).materialize(3)
        npt.assert_array_equal(a, b)
        y = sample_gaussian(PairParams(1, 1, 0.3), 100, seed=4)
        npt.assert_array_equal(
            quantize_real(y, ThresholdSchedule.staircase([0.5], 100)).signs,
            quantize_real(y, ThresholdSchedule.constant(0.5, 100)).signs,
        )

    def test_dict_round_trip(self):
        for s in (
            ThresholdSchedule.zero(10, 3),
            ThresholdSchedule.staircase([[0.1, 0.2], [0.3, 0.4]], 10),
            ThresholdSchedule.gaussian_dither(0.5, 0.3, 10),
            ThresholdSchedule.sine(0.4, 25, 100),
        ):
            assert ThresholdSchedule.from_dict(s.to_dict()) == s

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            ThresholdSchedule.from_dict({"kind": "zero", "n_samples": 4, "colour": 1})

    def test_dither_is_not_recorded(self):
        s = ThresholdSchedule.gaussian_dither(0.5, 0.3, 50)
        b = quantize_real(np.zeros((2, 50)), s, seed=1)
        assert b.thresholds is None
        assert not s.recorded


class TestSampling:
    def test_identity_covariance(self):
        y = sample_gaussian(PairParams(1, 1, 0), 10**6, seed=7)
        npt.assert_allclose(np.cov(y, bias=True), np.eye(2), atol=5e-3)

    def test_negative_correlation_setting(self):
        y = sample_gaussian(PairParams(0.25, 0.6, -0.08), 10**6, seed=8)
        assert abs(np.corrcoef(y)[0, 1] - (-0.08 / 0.15)) < 0.005

    def test_deterministic(self):
        a = sample_gaussian(PairParams(1, 2, 0.5), 1000, seed=3)
        b = sample_gaussian(PairParams(1, 2, 0.5), 1000, seed=3)
        npt.assert_array_equal(a, b)

    def test_not_positive_definite(self):
        with pytest.raises(np.linalg.LinAlgError):
            sample_gaussian(np.array([[1.0, 2.0], [2.0, 1.0]]), 10, seed=0)

    def test_complex_component_variance(self):
        y = sample_complex_gaussian(np.eye(1), 10**6, seed=5)
        npt.assert_allclose([y.real.var(), y.imag.var()], [0.5, 0.5], atol=3e-3)


class TestQuantize:
    def test_sign_of_zero(self):
        b = quantize_real(np.zeros((2, 1)), ThresholdSchedule.zero(1))
        npt.assert_array_equal(b.signs, [[1], [1]])

    def test_shifted_threshold(self):
        b = quantize_real(np.full((2, 1), -0.3), ThresholdSchedule.constant(-0.5, 1))
        npt.assert_array_equal(b.signs, [[1], [1]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            quantize_real(np.zeros((2, 5)), ThresholdSchedule.zero(6))

    def test_positive_rate(self):
        y = sample_gaussian(PairParams(1, 1, 0), 10**6, seed=9)
        b = quantize_real(y, ThresholdSchedule.constant(0.5, 10**6))
        assert abs(np.mean(b.signs[0] > 0) - stats.norm.sf(0.5)) < 0.002

    def test_complex_signs(self):
        y = np.array([[1 + 1j, -1 + 2j]])
        b = quantize_complex(y, ThresholdSchedule.zero(2, 1))
        npt.assert_array_equal(b.signs, [[1, -1]])
        npt.assert_array_equal(b.imag_signs, [[1, 1]])

    def test_complex_rate(self):
        y = sample_complex_gaussian(np.eye(1), 10**6, seed=10)
        b = quantize_complex(y, ThresholdSchedule.constant(0.2, 10**6, 1))
        assert abs(np.mean(b.signs > 0) - stats.norm.sf(0.2 / math.sqrt(0.5))) < 0.002

    def test_dither_equals_shifted_covariance(self):
        n, s2 = 10**6, 0.15
        p = PairParams(0.25, 0.6, -0.08)
        y = sample_gaussian(p, n, seed=11)
        dith = quantize_real(y, ThresholdSchedule.gaussian_dither(0.5, math.sqrt(s2), n), seed=12)
        ref = quantize_real(sample_gaussian(p.shifted(s2), n, seed=13), ThresholdSchedule.constant(0.5, n))
        tol = 4 * 0.5 / math.sqrt(n)
        for b in (dith, ref):
            b.rates = [np.mean(b.signs[0] > 0), np.mean(b.signs[1] > 0),
                       np.mean((b.signs[0] > 0) & (b.signs[1] > 0))]
        npt.assert_allclose(dith.rates, ref.rates, atol=2 * tol)


class TestSerialization:
    def _batch(self, cplx=False):
        n = 37
        sched = ThresholdSchedule.staircase([0.1, 0.2, 0.3], 36, 3) if not cplx else ThresholdSchedule.zero(n, 2)
        if cplx:
            y = sample_complex_gaussian(np.eye(2), n, seed=1)
            return quantize_complex(y, sched, seed=1)
        y = sample_gaussian(np.eye(3), 36, seed=1)
        return quantize_real(y, sched, seed=1)

    @pytest.mark.parametrize("cplx", [False, True])
    def test_bytes_round_trip(self, cplx):
        b = self._batch(cplx)
        c = OneBitBatch.from_bytes(b.to_bytes())
        npt.assert_array_equal(c.signs, b.signs)
        assert c.schedule == b.schedule and c.seed == b.seed
        if cplx:
            npt.assert_array_equal(c.imag_signs, b.imag_signs)

    def test_magic(self):
        assert self._batch().to_bytes()[:4] == b"OBIT"
        with pytest.raises(ValueError):
            OneBitBatch.from_bytes(b"XXXX" + bytes(40))

    @pytest.mark.parametrize("cplx", [False, True])
    def test_csv_round_trip(self, cplx):
        b = self._batch(cplx)
        c = OneBitBatch.from_csv(b.to_csv())
        npt.assert_array_equal(c.signs, b.signs)
        assert c.schedule == b.schedule

    def test_csv_long_record(self):
        sched = ThresholdSchedule.constant(0.2, 300)
        b = quantize_real(sample_gaussian(np.eye(2), 300, seed=2), sched, seed=2)
        npt.assert_array_equal(OneBitBatch.from_csv(b.to_csv()).signs, b.signs)

    def test_rejects_non_signs(self):
        with pytest.raises(ValueError):
            OneBitBatch(np.zeros((2, 3)), ThresholdSchedule.zero(3))

    @given(st.integers(1, 5), st.integers(1, 70), st.integers(0, 2**31))
    def test_bytes_property(self, m, n, seed):
        rng = np.random.default_rng(seed)
        signs = np.where(rng.random((m, n)) < 0.5, -1, 1)
        b = OneBitBatch(signs, ThresholdSchedule.zero(n, m), seed=seed)
        npt.assert_array_equal(OneBitBatch.from_bytes(b.to_bytes()).signs, signs)


class TestDitherStream:
    def test_same_integer_seed_is_independent(self):
        n = 10**5
        y = sample_gaussian(np.eye(2), n, seed=3)
        v = ThresholdSchedule.gaussian_dither(0.0, 1.0, n).materialize(3)
        assert abs(np.corrcoef(y[0], v[0])[0, 1]) < 5 / np.sqrt(n)

    def test_generator_used_as_given(self):
        s = ThresholdSchedule.gaussian_dither(0.0, 1.0, 10)
        a = s.materialize(np.random.Generator(np.random.PCG64(8)))
        b = s.materialize(np.random.Generator(np.random.PCG64(8)))
        npt.assert_array_equal(a, b)
