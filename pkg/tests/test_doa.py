import numpy as np
import numpy.testing as npt
import pytest

from onebitcov import doa
from onebitcov.errors import IllPosedError
from onebitcov.quantizer import ThresholdSchedule, quantize_complex
from onebitcov.recovery import recover_complex

TRUTH = np.array([15.0, 45.0, 75.0])


class TestScenario:
    @pytest.mark.parametrize("kw", [
        {"n_sensors": 3},
        {"angles": (10.0, 10.0)},
        {"snapshots": 0},
        {"angles": (95.0,)},
    ])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            doa.ArrayScenario(**kw)

    def test_broadside_noiseless(self):
        s = doa.ArrayScenario(n_sensors=4, angles=(0.0,), snr_db=300, snapshots=50)
        y = doa.gen_snapshots(s, 1)
        npt.assert_allclose(y, np.tile(y[0], (4, 1)), atol=1e-12)

    def test_coherent_rank_one(self):
        s = doa.ArrayScenario(snr_db=200, snapshots=10**6)
        y = doa.gen_snapshots(s, 2)
        w = np.linalg.eigvalsh(y @ y.conj().T / y.shape[1])[::-1]
        assert w[1] / w[0] < 1e-3

    def test_sample_covariance_matches_population(self):
        s = doa.ArrayScenario(snapshots=10**5)
        y, g = doa.gen_snapshots(s, 3, return_gains=True)
        est = y @ y.conj().T / y.shape[1]
        assert np.abs(est - s.covariance(g)).max() < 0.05 * np.abs(s.covariance(g)).max()

    def test_noise_power(self):
        s = doa.ArrayScenario(snr_db=20)
        assert s.noise_power == pytest.approx(3 / 100)


class TestEstimator:
    def test_exact_coherent(self):
        s = doa.ArrayScenario()
        _, g = doa.gen_snapshots(s, 4, return_gains=True)
        npt.assert_allclose(doa.doa_estimate(s.covariance(g), 3), TRUTH, atol=0.5)

    def test_exact_incoherent_without_smoothing(self):
        s = doa.ArrayScenario(coherent=False)
        npt.assert_allclose(doa.doa_estimate(s.covariance(), 3, sub_len=6), TRUTH, atol=0.1)

    def test_scale_invariant(self):
        s = doa.ArrayScenario(snapshots=2000)
        y = doa.gen_snapshots(s, 5)
        cov = y @ y.conj().T / y.shape[1]
        a = doa.doa_estimate(cov, 3)
        b = doa.doa_estimate(7.3 * cov, 3)
        npt.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_permuted_sensors(self):
        s = doa.ArrayScenario()
        _, g = doa.gen_snapshots(s, 6, return_gains=True)
        cov = s.covariance(g)
        perm = np.array([3, 0, 5, 1, 4, 2])
        out = doa.doa_estimate(cov[np.ix_(perm, perm)], 3, positions=perm)
        npt.assert_allclose(out, doa.doa_estimate(cov, 3), atol=1e-12)

    def test_output_sorted_in_range(self):
        s = doa.ArrayScenario(angles=(-60.0, 10.0, 40.0), snapshots=500)
        y = doa.gen_snapshots(s, 7)
        out = doa.doa_estimate(y @ y.conj().T / 500, 3)
        assert np.all(np.diff(out) > 0) and np.all(np.abs(out) <= 90)

    def test_too_many_sources(self):
        with pytest.raises(IllPosedError):
            doa.doa_estimate(np.eye(4, dtype=complex), 3)

    def test_bad_positions(self):
        with pytest.raises(ValueError):
            doa.doa_estimate(np.eye(4, dtype=complex), 1, positions=[0, 1, 2, 4])

    def test_fb_smooth_persymmetric(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 40)) + 1j * rng.normal(size=(6, 40))
        r = doa.fb_smooth(x @ x.conj().T, 5)
        j = np.eye(5)[::-1]
        npt.assert_allclose(r, r.conj().T, atol=1e-12)
        npt.assert_allclose(j @ r.conj() @ j, r, atol=1e-12)

    def test_fb_smooth_full_length(self):
        # with one subarray only the backward average remains
        c = np.array([[2.0, 1j], [-1j, 1.0]])
        npt.assert_allclose(doa.fb_smooth(c, 2), [[1.5, 1j], [-1j, 1.5]])


class TestFrontEnds:
    def test_recovered_hermitian(self):
        s = doa.ArrayScenario(snapshots=2000)
        y = doa.gen_snapshots(s, 9)
        for m in ("time_varying", "constant", "dither"):
            c = doa.estimate_covariance(y, m, 9)
            npt.assert_array_equal(c, c.conj().T)

    def test_schedule_scaled_by_rms(self):
        rms = np.array([1.0, 2.0])
        sched = doa.method_schedule("time_varying", rms, 100)
        thr = sched.materialize()
        npt.assert_allclose(thr[1], 2 * thr[0])
        npt.assert_allclose(thr[0, ::10], np.round(np.arange(1, 11) * 0.1, 10))

    def test_rail_rms(self):
        y = np.array([[1 + 1j, -1 - 1j], [2j, 2.0]])
        npt.assert_allclose(doa.rail_rms(y), [1.0, np.sqrt(2)])
        npt.assert_allclose(doa.rail_rms(y, per_channel=False), np.sqrt(1.5))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            doa.method_schedule("magic", [1.0], 10)

    def test_matches_direct_pipeline(self):
        s = doa.ArrayScenario(snapshots=1000)
        y = doa.gen_snapshots(s, 10)
        sched = doa.method_schedule("time_varying", doa.rail_rms(y), 1000)
        ref = recover_complex(quantize_complex(y, sched, 10), "time_varying").matrix
        npt.assert_array_equal(doa.estimate_covariance(y, "time_varying", 10), ref)


class TestPipeline:
    def test_files_and_rows(self, tmp_path):
        s = doa.ArrayScenario(snapshots=2000)
        out = tmp_path / "doa.csv"
        res = doa.doa_pipeline(s, trials=3, seed=11, out=str(out))
        for suffix in ("", ".rmse.csv", ".angles.csv"):
            text = (tmp_path / f"doa.csv{suffix}").read_text()
            assert text.startswith("# doa=")
            assert "summed source power" in text.splitlines()[0]
        angles = (tmp_path / "doa.csv.angles.csv").read_text().splitlines()
        assert len(angles) == 2 + 3 * len(doa.DOA_METHODS)
        assert len(res.rows()) == 3 * len(doa.DOA_METHODS)

    def test_reproducible(self):
        s = doa.ArrayScenario(snapshots=1000)
        a = doa.doa_pipeline(s, trials=2, seed=12, methods=("time_varying", "dither"))
        b = doa.doa_pipeline(s, trials=2, seed=12, methods=("time_varying", "dither"))
        assert a.angles_csv() == b.angles_csv()

    def test_unquantized_most_accurate(self):
        s = doa.ArrayScenario(snapshots=5000)
        res = doa.doa_pipeline(s, trials=4, seed=13)
        base = res.rmse("unquantized")
        for m in ("time_varying", "constant", "dither"):
            assert np.all(base <= res.rmse(m)), m

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            doa.doa_pipeline(doa.ArrayScenario(snapshots=10), trials=1, methods=("magic",))

    def test_failures_recorded(self):
        s = doa.ArrayScenario(snapshots=5)
        res = doa.doa_pipeline(s, trials=3, seed=14, methods=("constant",))
        n_bad = int(np.sum(~np.all(np.isfinite(res.angles["constant"]), axis=1)))
        assert n_bad == len(res.failures["constant"])
