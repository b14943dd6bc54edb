"""Seeded Monte Carlo experiments comparing threshold strategies.

Every trial ``i`` draws its Gaussian record from ``PCG64(base_seed + i)``;
all methods within a trial see the same record, so method comparisons use
common random numbers. Records are reduced to outcome counts per threshold
group and then fitted in one vectorized batch per method.
"""

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .quantizer import PairParams, ThresholdSchedule, make_rng
from .recovery.pair import METHODS, fit_counts
from .theory import predict_mse

PARAM_NAMES = ("sigma1", "sigma2", "sigma12")
SWEEPS = ("rho", "delta", "n_samples", "threshold")
CSV_COLUMNS = ("method", "sweep_value", "parameter", "mse", "se", "theory_mse", "ratio",
               "trials", "failed", "seed")

STAIRCASE = [round(0.1 * k, 1) for k in range(1, 11)]
DITHER_VAR = 0.15


@dataclass
class MethodSpec:
    """One estimator under test: a label, a recovery method and its schedule
    (a schedule dict without ``n_samples``)."""

    label: str
    method: str
    schedule: dict

    def __post_init__(self):
        if self.method not in METHODS or self.method == "arcsine":
            raise ValueError(f"unsupported bench method {self.method!r}")

    def build(self, n_samples) -> ThresholdSchedule:
        d = dict(self.schedule)
        d["n_samples"] = n_samples
        d.setdefault("n_channels", 2)
        return ThresholdSchedule.from_dict(d)


def _strict(cls, d, what):
    allowed = {f.name for f in fields(cls)}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown {what} keys: {sorted(extra)}")


@dataclass
class ExperimentConfig:
    """A Monte Carlo study.

    ``params`` holds ``sigma1``, ``sigma2`` and either ``sigma12`` or ``rho``
    (the one given is held fixed across sweeps). ``sweep`` is
    ``{"name": one of SWEEPS, "values": [...]}``:

    * ``rho`` sets ``sigma12 = rho sigma1 sigma2``;
    * ``delta`` adds to ``sigma1`` and subtracts from ``sigma2``;
    * ``n_samples`` changes N;
    * ``threshold`` replaces the level of every constant or dither schedule.

    ``expect`` lists acceptance bands ``{method, parameter, target, rel_tol
    [, sweep_value]}`` checked after the run.
    """

    name: str
    params: dict
    methods: list
    n_samples: int = 1000
    trials: int = 10000
    base_seed: int = 0
    sweep: Optional[dict] = None
    output: Optional[str] = None
    theory: bool = False
    threads: int = 1
    expect: list = field(default_factory=list)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods]
        if not self.methods:
            raise ValueError("at least one method is required")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError("method labels must be unique")
        extra = set(self.params) - {"sigma1", "sigma2", "sigma12", "rho"}
        if extra or ("sigma12" in self.params) == ("rho" in self.params):
            raise ValueError("params need sigma1, sigma2 and exactly one of sigma12 / rho")
        if self.sweep is not None:
            if set(self.sweep) != {"name", "values"} or self.sweep["name"] not in SWEEPS:
                raise ValueError(f"sweep must be {{name, values}} with name in {SWEEPS}")
        for point in self.points():
            PairParams(**point[1])  # validates every swept value

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        _strict(cls, d, "config")
        for m in d.get("methods", []):
            if isinstance(m, dict):
                _strict(MethodSpec, m, "method")
        return cls(**d)

    @classmethod
    def from_json(cls, text) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        d = asdict(self)
        d["methods"] = [asdict(m) for m in self.methods]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def points(self):
        """``(sweep_value, params dict, n_samples, threshold_override)`` per sweep point."""
        if self.sweep is None:
            return [(None, self._params(), self.n_samples, None)]
        name, out = self.sweep["name"], []
        for val in self.sweep["values"]:
            val = float(val)
            if name == "rho":
                out.append((val, self._params(rho=val), self.n_samples, None))
            elif name == "delta":
                out.append((val, self._params(delta=val), self.n_samples, None))
            elif name == "n_samples":
                out.append((val, self._params(), int(val), None))
            else:
                out.append((val, self._params(), self.n_samples, val))
        return out

    def _params(self, rho=None, delta=0.0):
        s1 = self.params["sigma1"] + delta
        s2 = self.params["sigma2"] - delta
        if rho is None:
            rho = self.params.get("rho")
        s12 = self.params["sigma12"] if rho is None else rho * s1 * s2
        return {"sigma1": s1, "sigma2": s2, "sigma12": s12}


@dataclass
class ResultRow:
    method: str
    sweep_value: Optional[float]
    parameter: str
    mse: float
    se: float
    theory_mse: Optional[float]
    trials: int
    failed: int
    seed: int

    @property
    def ratio(self):
        if self.theory_mse is None or not self.theory_mse > 0:
            return None
        return self.mse / self.theory_mse

    def cells(self):
        def f(x):
            return "" if x is None else repr(float(x))

        return [self.method, f(self.sweep_value), self.parameter, f(self.mse), f(self.se),
                f(self.theory_mse), f(self.ratio), self.trials, self.failed, self.seed]


# -- simulation -------------------------------------------------------------------

class _Plan:
    """Precomputed threshold groups for one method at one sweep point."""

    def __init__(self, spec: MethodSpec, sched: ThresholdSchedule):
        self.spec = spec
        self.sched = sched
        self.dither = sched.kind == "gaussian_dither"
        nominal = sched.nominal()
        self.nominal = nominal
        if self.dither:
            self.v1, self.v2 = nominal[0, :1], nominal[1, :1]
            self.gid = np.zeros(sched.n_samples, int)
            self.std = np.sqrt(sched.dither_variance())[:, None]
        else:
            keys = nominal[:2].T
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            self.v1, self.v2 = uniq[:, 0], uniq[:, 1]
            self.gid = inv.ravel()
        self.n_groups = len(self.v1)
        if spec.method in ("constant", "dither") and self.n_groups != 1:
            raise ValueError(f"{spec.label}: {spec.method} needs one constant level")

    def counts(self, y, rng):
        v = self.nominal
        if self.dither:
            v = v + self.std * rng.standard_normal(v.shape)
        neg = y < v
        idx = self.gid * 4 + neg[0] * 2 + neg[1]
        return np.bincount(idx, minlength=4 * self.n_groups).reshape(self.n_groups, 4)


def _override(spec: MethodSpec, level):
    if level is None or spec.schedule.get("kind") not in ("constant", "gaussian_dither"):
        return spec
    d = dict(spec.schedule)
    d["values"] = [level]
    return MethodSpec(spec.label, spec.method, d)


def simulate(params: PairParams, plans, n_samples, trials, base_seed):
    """Outcome counts ``(trials, G, 4)`` for each plan."""
    chol = np.linalg.cholesky(params.cov())
    out = [np.empty((trials, p.n_groups, 4)) for p in plans]
    for i in range(trials):
        rng = make_rng(base_seed + i)
        y = chol @ rng.standard_normal((2, n_samples))
        for k, p in enumerate(plans):
            out[k][i] = p.counts(y, rng)
    return out


def _summarize(label, sweep_value, theta, truth, theory, seed):
    ok = np.all(np.isfinite(theta), axis=-1)
    err = (theta[ok] - truth) ** 2
    n_ok = int(ok.sum())
    rows = []
    for j, name in enumerate(PARAM_NAMES):
        if n_ok:
            mse = float(np.mean(err[:, j]))
            se = float(np.std(err[:, j], ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else math.nan
        else:
            mse = se = math.nan
        th = None if theory is None else float(theory[j])
        rows.append(ResultRow(label, sweep_value, name, mse, se, th, n_ok, len(theta) - n_ok, seed))
    return rows


def _dither_var(sched):
    if sched.kind != "gaussian_dither":
        return (0.0, 0.0)
    var = sched.dither_variance()
    return (float(var[0]), float(var[1]))


def run_point(config: ExperimentConfig, point, keep_estimates=False):
    sweep_value, pdict, n, level = point
    params = PairParams(**pdict)
    specs = [_override(m, level) for m in config.methods]
    plans = [_Plan(s, s.build(n)) for s in specs]
    counts = simulate(params, plans, n, config.trials, config.base_seed)
    rows, extras = [], {}
    for p, c in zip(plans, counts):
        theta, flags = fit_counts(p.spec.method, p.v1, p.v2, c, _dither_var(p.sched))
        theory = None
        if config.theory:
            theory = predict_mse(params, p.sched, p.spec.method).mse
        rows += _summarize(p.spec.label, sweep_value, theta, params.theta, theory, config.base_seed)
        if keep_estimates:
            extras[p.spec.label] = (theta, flags)
    return rows, extras


def run(config: ExperimentConfig, write=True):
    """Run every sweep point; write the CSV when ``config.output`` is set."""
    points = config.points()
    if config.threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(config.threads) as ex:
            parts = list(ex.map(lambda pt: run_point(config, pt)[0], points))
    else:
        parts = [run_point(config, pt)[0] for pt in points]
    rows = [r for part in parts for r in part]
    if write and config.output:
        write_csv(config.output, rows, config)
    return rows


def compare_theory(config: ExperimentConfig, write=True):
    """As :func:`run` with predicted MSEs and empirical/predicted ratios attached."""
    d = config.to_dict()
    d["theory"] = True
    return run(ExperimentConfig.from_dict(d), write)


def rows_to_csv(rows, config: Optional[ExperimentConfig] = None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# config={config.to_json()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, rows, config=None):
    atomic_write(path, rows_to_csv(rows, config))


def find(rows, method, parameter, sweep_value=None):
    for r in rows:
        if r.method == method and r.parameter == parameter and (
            sweep_value is None or r.sweep_value == sweep_value
        ):
            return r
    raise KeyError((method, parameter, sweep_value))


def check_expectations(rows, expect):
    """Return the violated bands as human-readable strings."""
    bad = []
    for e in expect:
        r = find(rows, e["method"], e["parameter"], e.get("sweep_value"))
        lo, hi = e["target"] * (1 - e["rel_tol"]), e["target"] * (1 + e["rel_tol"])
        if not lo <= r.mse <= hi:
            bad.append(f"{e['method']}/{e['parameter']}: mse {r.mse:.4g} outside [{lo:.4g}, {hi:.4g}]")
    return bad


# -- joint versus separate ---------------------------------------------------------

@dataclass
class Table1Row:
    parameter: str
    mse_separate: float
    se_separate: float
    mse_joint: float
    se_joint: float
    grad_median: float
    grad_mean: float
    grad_max: float


def table1(config: ExperimentConfig):
    """Separate versus joint maximum likelihood on one staircase schedule.

    Gradient columns are ``|dL/dtheta| / N`` at the separate estimates
    (the joint ascent's starting point), summarised over trials.
    """
    spec = next(m for m in config.methods if m.method.startswith("time_varying"))
    spec = MethodSpec(spec.label, "time_varying_joint", spec.schedule)
    _, pdict, n, _ = config.points()[0]
    params = PairParams(**pdict)
    plan = _Plan(spec, spec.build(n))
    (counts,) = simulate(params, [plan], n, config.trials, config.base_seed)
    theta, flags = fit_counts("time_varying_joint", plan.v1, plan.v2, counts)
    sep = flags["separate_theta"]
    ok = np.all(np.isfinite(theta), axis=-1) & np.all(np.isfinite(sep), axis=-1)
    g = np.abs(flags["initial_grad"][ok]) / n
    e_sep = (sep[ok] - params.theta) ** 2
    e_joint = (theta[ok] - params.theta) ** 2
    root = math.sqrt(ok.sum())
    out = []
    for j, name in enumerate(PARAM_NAMES):
        out.append(Table1Row(
            name,
            float(e_sep[:, j].mean()), float(e_sep[:, j].std(ddof=1) / root),
            float(e_joint[:, j].mean()), float(e_joint[:, j].std(ddof=1) / root),
            float(np.median(g[:, j])), float(g[:, j].mean()), float(g[:, j].max()),
        ))
    meta = {
        "trials": int(ok.sum()),
        "failed": int((~ok).sum()),
        "joint_iterations_mean": float(flags["joint_iterations"][ok].mean()),
        "joint_unconverged": int((~flags["joint_converged"][ok]).sum()),
        "line_search_failed": int(flags["line_search_failed"][ok].sum()),
    }
    return out, meta


def table1_csv(rows, meta, config=None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# config={config.to_json()}\n")
    buf.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in fields(Table1Row)]
    w.writerow(names)
    for r in rows:
        w.writerow([r.parameter] + [repr(getattr(r, k)) for k in names[1:]])
    return buf.getvalue()


# -- builtin studies ----------------------------------------------------------------

def _staircase():
    return {"label": "time_varying", "method": "time_varying",
            "schedule": {"kind": "staircase", "values": STAIRCASE}}


def _constant(v, label="constant"):
    return {"label": label, "method": "constant", "schedule": {"kind": "constant", "values": [v]}}


def _dither(v=0.5):
    return {"label": "dither", "method": "dither",
            "schedule": {"kind": "gaussian_dither", "values": [v],
                         "dither_std": [math.sqrt(DITHER_VAR)]}}


def builtin(name, trials=None, base_seed=None) -> ExperimentConfig:
    """Ready-made studies: fig1, fig2, fig3, fig4, fig5 and table1."""
    fig1_params = {"sigma1": 0.25, "sigma2": 0.6, "sigma12": -0.08}
    table = {
        "fig1": dict(params=fig1_params, methods=[_constant(0.5)], theory=True,
                     sweep={"name": "threshold",
                            "values": [round(0.1 + 0.05 * k, 2) for k in range(31)]}),
        "fig2": dict(params=fig1_params,
                     methods=[_staircase()] + [_constant(v, f"constant_{v}") for v in STAIRCASE]
                     + [_dither()]),
        "fig3": dict(params={"sigma1": 0.25, "sigma2": 0.6, "rho": 0.0},
                     methods=[_staircase(), _constant(0.5), _dither()],
                     sweep={"name": "rho", "values": [round(-0.95 + 0.1 * k, 2) for k in range(20)]}),
        "fig4": dict(params={"sigma1": 0.6, "sigma2": 0.6, "rho": 0.5},
                     methods=[_staircase(), _constant(0.5), _dither()],
                     sweep={"name": "delta", "values": [0.0, 0.1, 0.2, 0.3, 0.4]}),
        "fig5": dict(params={"sigma1": 0.8, "sigma2": 0.9, "sigma12": 0.25},
                     methods=[_staircase(), _constant(0.5)], theory=True,
                     sweep={"name": "n_samples", "values": [100, 1000, 10000]}),
        "table1": dict(params={"sigma1": 0.25, "sigma2": 0.6, "rho": 0.5},
                       methods=[_staircase()],
                       expect=[
                           {"method": "time_varying", "parameter": "sigma1",
                            "target": 2.291e-4, "rel_tol": 0.15},
                           {"method": "time_varying", "parameter": "sigma2",
                            "target": 1.024e-3, "rel_tol": 0.15},
                           {"method": "time_varying", "parameter": "sigma12",
                            "target": 2.160e-4, "rel_tol": 0.15},
                       ]),
    }
    if name not in table:
        raise KeyError(f"unknown builtin {name!r}; choose from {sorted(table)}")
    d = dict(table[name], name=name, n_samples=1000)
    d["trials"] = 10000 if trials is None else int(trials)
    d["base_seed"] = 0 if base_seed is None else int(base_seed)
    return ExperimentConfig.from_dict(d)
