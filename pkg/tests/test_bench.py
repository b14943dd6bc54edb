import math
import os

import numpy as np
import numpy.testing as npt
import pytest

from onebitcov import bench
from onebitcov.bench import ExperimentConfig, MethodSpec, ResultRow
from onebitcov.quantizer import PairParams, ThresholdSchedule
from onebitcov.recovery.likelihood import outcome_probs
from onebitcov.theory import predict_mse


def small(**kw):
    d = dict(
        name="t",
        params={"sigma1": 0.25, "sigma2": 0.6, "sigma12": -0.08},
        methods=[
            {"label": "tv", "method": "time_varying",
             "schedule": {"kind": "staircase", "values": bench.STAIRCASE}},
            {"label": "c", "method": "constant", "schedule": {"kind": "constant", "values": [0.3]}},
        ],
        n_samples=200,
        trials=50,
        base_seed=3,
    )
    d.update(kw)
    return ExperimentConfig.from_dict(d)


class TestConfig:
    def test_round_trip(self):
        cfg = small(sweep={"name": "rho", "values": [-0.5, 0.5]})
        assert ExperimentConfig.from_json(cfg.to_json()).to_dict() == cfg.to_dict()

    @pytest.mark.parametrize("bad", [
        {"colour": 1},
        {"trials": 0},
        {"params": {"sigma1": 1, "sigma2": 1, "sigma12": 0.1, "rho": 0.1}},
        {"params": {"sigma1": 1, "sigma2": 1}},
        {"sweep": {"name": "rho", "values": [1.2]}},
        {"sweep": {"name": "bogus", "values": [1]}},
        {"sweep": {"name": "delta", "values": [0.6]}},
    ])
    def test_rejected(self, bad):
        d = small().to_dict()
        d.update(bad)
        with pytest.raises((ValueError, TypeError)):
            ExperimentConfig.from_dict(d)

    def test_method_keys_checked(self):
        d = small().to_dict()
        d["methods"][0]["extra"] = 1
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(d)

    def test_arcsine_not_benchable(self):
        with pytest.raises(ValueError):
            MethodSpec("a", "arcsine", {"kind": "zero"})

    def test_sweep_points(self):
        cfg = small(params={"sigma1": 0.6, "sigma2": 0.6, "rho": 0.5},
                    sweep={"name": "delta", "values": [0.0, 0.2]})
        (_, p0, _, _), (_, p1, _, _) = cfg.points()
        npt.assert_allclose([p1["sigma1"], p1["sigma2"], p1["sigma12"]], [0.8, 0.4, 0.5 * 0.32])
        assert p0["sigma12"] == pytest.approx(0.18)
        pts = small(sweep={"name": "n_samples", "values": [100, 1000]}).points()
        assert [p[2] for p in pts] == [100, 1000]
        pts = small(sweep={"name": "threshold", "values": [0.4]}).points()
        assert pts[0][3] == 0.4


class TestSimulation:
    def test_counts_follow_outcome_probabilities(self):
        p = PairParams(0.25, 0.6, -0.08)
        spec = MethodSpec("c", "constant", {"kind": "constant", "values": [0.3]})
        plan = bench._Plan(spec, spec.build(1000))
        (counts,) = bench.simulate(p, [plan], 1000, 400, 0)
        mean = counts[:, 0].mean(axis=0) / 1000
        o = outcome_probs(*p.theta, [0.3], [0.3])[0]
        assert np.all(np.abs(mean - o) <= 4 * np.sqrt(o * (1 - o) / 4e5))

    def test_per_trial_seed(self):
        p = PairParams(0.25, 0.6, -0.08)
        spec = MethodSpec("tv", "time_varying", {"kind": "staircase", "values": bench.STAIRCASE})
        plan = bench._Plan(spec, spec.build(100))
        (full,) = bench.simulate(p, [plan], 100, 6, 10)
        (one,) = bench.simulate(p, [plan], 100, 1, 14)
        npt.assert_array_equal(full[4], one[0])

    def test_dither_draws_after_data(self):
        # adding a dither method must not change the other methods' counts
        p = PairParams(0.25, 0.6, -0.08)
        tv = MethodSpec("tv", "time_varying", {"kind": "staircase", "values": bench.STAIRCASE})
        d = MethodSpec("d", "dither", {"kind": "gaussian_dither", "values": [0.5], "dither_std": [0.3]})
        a = bench._Plan(tv, tv.build(100))
        b = bench._Plan(d, d.build(100))
        (alone,) = bench.simulate(p, [a], 100, 3, 0)
        both, _ = bench.simulate(p, [a, b], 100, 3, 0)
        npt.assert_array_equal(alone, both)


class TestRun:
    def test_rows(self):
        rows = bench.run(small(), write=False)
        assert len(rows) == 6
        r = bench.find(rows, "tv", "sigma1")
        assert r.mse >= 0 and r.trials + r.failed == 50 and r.seed == 3

    def test_summary_statistics(self):
        theta = np.array([[1.0, 2.0, 0.0], [1.2, 2.0, 0.1], [np.nan, 1.0, 0.0], [0.8, 2.1, -0.1]])
        rows = bench._summarize("m", None, theta, np.array([1.0, 2.0, 0.0]), None, 0)
        err = np.array([0.0, 0.04, 0.04])
        assert rows[0].failed == 1 and rows[0].trials == 3
        npt.assert_allclose(rows[0].mse, err.mean())
        npt.assert_allclose(rows[0].se, err.std(ddof=1) / math.sqrt(3))

    def test_failed_trials_excluded(self):
        # a threshold far above the scale saturates many short records
        cfg = small(methods=[{"label": "c", "method": "constant",
                              "schedule": {"kind": "constant", "values": [0.6]}}])
        rows = bench.run(cfg, write=False)
        r = bench.find(rows, "c", "sigma1")
        assert 0 < r.failed < 50 and np.isfinite(r.mse)

    def test_reproducible_and_thread_invariant(self, tmp_path):
        cfg = small(sweep={"name": "rho", "values": [-0.5, 0.0, 0.5]}, output=str(tmp_path / "a.csv"))
        bench.run(cfg)
        first = (tmp_path / "a.csv").read_text()
        bench.run(cfg)
        assert (tmp_path / "a.csv").read_text() == first
        d = cfg.to_dict()
        d.update(threads=3, output=str(tmp_path / "b.csv"))
        bench.run(ExperimentConfig.from_dict(d))
        body = lambda t: t.split("\n", 1)[1]
        assert body((tmp_path / "b.csv").read_text()) == body(first)
        assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]

    def test_csv_layout(self):
        cfg = small()
        text = bench.rows_to_csv(bench.run(cfg, write=False), cfg)
        lines = text.splitlines()
        assert lines[0].startswith("# config=")
        assert tuple(lines[1].split(",")) == bench.CSV_COLUMNS
        mse = float(lines[2].split(",")[3])
        assert repr(mse) == lines[2].split(",")[3]

    def test_expectations(self):
        rows = [ResultRow("m", None, "sigma1", 1.0, 0.1, None, 10, 0, 0)]
        ok = [{"method": "m", "parameter": "sigma1", "target": 1.05, "rel_tol": 0.1}]
        bad = [{"method": "m", "parameter": "sigma1", "target": 2.0, "rel_tol": 0.1}]
        assert bench.check_expectations(rows, ok) == []
        assert len(bench.check_expectations(rows, bad)) == 1


class TestTheoryColumns:
    def test_dispatch(self):
        rows = bench.compare_theory(small(), write=False)
        p = PairParams(0.25, 0.6, -0.08)
        tv = predict_mse(p, ThresholdSchedule.staircase(bench.STAIRCASE, 200)).mse
        c = predict_mse(p, ThresholdSchedule.constant(0.3, 200)).mse
        assert bench.find(rows, "tv", "sigma2").theory_mse == tv[1]
        assert bench.find(rows, "c", "sigma12").theory_mse == c[2]
        r = bench.find(rows, "c", "sigma1")
        assert r.ratio == r.mse / r.theory_mse

    def test_sample_size_study(self):
        cfg = bench.builtin("fig5", trials=2000, base_seed=11)
        rows = bench.run(cfg, write=False)
        for method in ("time_varying", "constant"):
            for name in bench.PARAM_NAMES:
                sel = [bench.find(rows, method, name, float(n)) for n in (100, 1000, 10000)]
                for r in sel[1:]:
                    assert 0.9 <= r.ratio <= 1.1, (method, name, r.sweep_value, r.ratio)
                for col in ("mse", "theory_mse"):
                    y = [getattr(r, col) for r in sel]
                    slope = np.polyfit(np.log([100, 1000, 10000]), np.log(y), 1)[0]
                    assert abs(slope + 1) < 0.15, (method, name, col, slope)


class TestBuiltins:
    def test_all_build(self):
        for name in ("fig1", "fig2", "fig3", "fig4", "fig5", "table1"):
            cfg = bench.builtin(name, trials=5)
            assert cfg.trials == 5 and cfg.n_samples == 1000

    def test_unknown(self):
        with pytest.raises(KeyError):
            bench.builtin("fig9")

    def test_settings(self):
        f3 = bench.builtin("fig3")
        vals = f3.sweep["values"]
        assert vals[0] == -0.95 and vals[-1] == 0.95
        f2 = bench.builtin("fig2")
        assert [m.label for m in f2.methods][:2] == ["time_varying", "constant_0.1"]
        assert f2.params == {"sigma1": 0.25, "sigma2": 0.6, "sigma12": -0.08}
        dither = f2.methods[-1].build(1000)
        npt.assert_allclose(dither.dither_variance(), [0.15, 0.15])

    def test_table1_small(self):
        rows, meta = bench.table1(bench.builtin("table1", trials=200, base_seed=5))
        by = {r.parameter: r for r in rows}
        assert by["sigma1"].grad_median > by["sigma2"].grad_median > by["sigma12"].grad_median
        assert meta["trials"] + meta["failed"] == 200
        text = bench.table1_csv(rows, meta)
        assert text.startswith("# meta=")
