"""Direction finding on a uniform linear array from one-bit covariance estimates.

The back end is forward-backward spatial smoothing followed by root-MUSIC.
It is the same for every covariance front end, so differences in angle error
come only from covariance recovery.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bench import ResultRow, atomic_write, rows_to_csv
from .errors import IllPosedError, OneBitError
from .quantizer import ThresholdSchedule, make_rng, quantize_complex
from .recovery.matrix import recover_complex

DOA_METHODS = ("time_varying", "constant", "dither", "unquantized")


@dataclass
class ArrayScenario:
    """Narrowband sources impinging on an ``n_sensors`` element ULA.

    ``spacing`` is the element spacing in wavelengths. SNR is the summed
    source power per sensor over the noise power.
    """

    n_sensors: int = 6
    angles: Sequence[float] = (15.0, 45.0, 75.0)
    snr_db: float = 20.0
    snapshots: int = 10000
    coherent: bool = True
    spacing: float = 0.5

    def __post_init__(self):
        self.angles = tuple(float(a) for a in self.angles)
        if self.n_sensors <= len(self.angles):
            raise ValueError("need more sensors than sources")
        if len(set(self.angles)) != len(self.angles):
            raise ValueError("source angles must be distinct")
        if self.snapshots < 1:
            raise ValueError("need at least one snapshot")
        if any(abs(a) > 90 for a in self.angles):
            raise ValueError("angles must lie in [-90, 90] degrees")

    @property
    def n_sources(self):
        return len(self.angles)

    @property
    def noise_power(self):
        return self.n_sources / 10 ** (self.snr_db / 10)

    def steering(self, angles=None):
        ang = np.deg2rad(np.asarray(self.angles if angles is None else angles, float))
        m = np.arange(self.n_sensors)[:, None]
        return np.exp(2j * np.pi * self.spacing * m * np.sin(ang)[None, :])

    def covariance(self, gains=None):
        """Population covariance; coherent scenarios need the per-trial ``gains``."""
        a = self.steering()
        if self.coherent:
            g = np.ones(self.n_sources) if gains is None else np.asarray(gains)
            b = a @ g
            src = np.outer(b, b.conj())
        else:
            src = a @ a.conj().T
        return src + self.noise_power * np.eye(self.n_sensors)

    def to_dict(self):
        d = asdict(self)
        d["angles"] = list(self.angles)
        return d


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def gen_snapshots(scenario: ArrayScenario, seed=None, return_gains=False):
    """Received snapshots ``y(t) = A s(t) + n(t)``, shape ``(M, N)``.

    Coherent sources share one unit-power waveform scaled by unit-modulus
    gains with random phases fixed per call.
    """
    rng = make_rng(seed)
    k, n = scenario.n_sources, scenario.snapshots
    a = scenario.steering()
    if scenario.coherent:
        gains = np.exp(2j * np.pi * rng.random(k))
        s = gains[:, None] * _cn(rng, (1, n))
    else:
        gains = np.ones(k, complex)
        s = _cn(rng, (k, n))
    y = a @ s + math.sqrt(scenario.noise_power) * _cn(rng, (scenario.n_sensors, n))
    return (y, gains) if return_gains else y


def fb_smooth(cov, sub_len):
    """Forward-backward spatially smoothed covariance of size ``sub_len``."""
    m = cov.shape[0]
    n_sub = m - sub_len + 1
    if n_sub < 1:
        raise ValueError("subarray longer than the array")
    fwd = sum(cov[i:i + sub_len, i:i + sub_len] for i in range(n_sub)) / n_sub
    exch = np.eye(sub_len)[::-1]
    return 0.5 * (fwd + exch @ fwd.conj() @ exch)


def root_music(cov, n_sources, spacing=0.5):
    """Angles (degrees, ascending) from the noise subspace of ``cov``."""
    m = cov.shape[0]
    w, vecs = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    noise = vecs[:, : m - n_sources]
    c = noise @ noise.conj().T
    # coefficient of z^k is the sum of the k-th diagonal of C
    coef = np.array([np.trace(c, offset=k) for k in range(m - 1, -m, -1)])
    roots = np.roots(coef)
    inside = roots[np.abs(roots) < 1.0]
    if inside.size < n_sources:
        raise IllPosedError("not enough signal roots inside the unit circle")
    pick = inside[np.argsort(1.0 - np.abs(inside))[:n_sources]]
    s = np.angle(pick) / (2 * np.pi * spacing)
    s = _polish(s, coef[::-1], m, 2 * np.pi * spacing)
    return np.sort(np.rad2deg(np.arcsin(np.clip(s, -1.0, 1.0))))


def _polish(u, c, m, omega, n_iter=5):
    # the roots are double on the unit circle, so np.roots only resolves
    # them to ~sqrt(eps); a few Newton steps on the null spectrum restore
    # full precision
    k = np.arange(-(m - 1), m)
    u = np.array(u, float)
    for _ in range(n_iter):
        ph = np.exp(1j * omega * np.outer(u, k))
        d1 = (ph * (1j * omega * k * c)).sum(axis=1).real
        d2 = (ph * (-((omega * k) ** 2) * c)).sum(axis=1).real
        step = np.where(d2 > 0, d1 / np.where(d2 > 0, d2, 1.0), 0.0)
        step = np.where(np.abs(step) < 1e-2, step, 0.0)
        u = u - step
    return u


def doa_estimate(cov, n_sources, positions=None, spacing=0.5, sub_len=None):
    """Source angles from an array covariance.

    ``positions`` are integer element indices of a ULA in any order; the
    covariance is reordered to ascending position first.
    """
    cov = np.asarray(cov, complex)
    m = cov.shape[0]
    if positions is not None:
        pos = np.asarray(positions)
        order = np.argsort(pos)
        if not np.array_equal(np.diff(pos[order]), np.ones(m - 1, pos.dtype)):
            raise ValueError("positions must form a contiguous uniform array")
        cov = cov[np.ix_(order, order)]
    sub_len = m - 1 if sub_len is None else sub_len
    if n_sources >= sub_len:
        raise IllPosedError("too many sources for the smoothed subarray")
    return root_music(fb_smooth(cov, sub_len), n_sources, spacing)


def rail_rms(y, per_channel=True):
    """RMS of the real and imaginary rails, per sensor or pooled."""
    power = y.real**2 + y.imag**2
    if per_channel:
        return np.sqrt(power.mean(axis=1) / 2.0)
    return np.full(y.shape[0], math.sqrt(float(power.mean()) / 2.0))


def method_schedule(method, rms, n_samples):
    """Threshold schedule of a one-bit front end scaled by the rail RMS
    ``rms`` (one value per sensor)."""
    rms = np.asarray(rms, float)
    m = rms.size
    if method == "time_varying":
        steps = np.round(0.1 * np.arange(1, 11), 1)
        return ThresholdSchedule.staircase(rms[:, None] * steps[None, :], n_samples, m)
    if method == "constant":
        return ThresholdSchedule.constant(0.5 * rms, n_samples, m)
    if method == "dither":
        return ThresholdSchedule.gaussian_dither(0.5 * rms, math.sqrt(0.15) * rms, n_samples, m)
    raise ValueError(f"unknown front end {method!r}")


def estimate_covariance(y, method, seed, per_channel=True):
    if method == "unquantized":
        return y @ y.conj().T / y.shape[1]
    sched = method_schedule(method, rail_rms(y, per_channel), y.shape[1])
    batch = quantize_complex(y, sched, seed)
    return recover_complex(batch, method).matrix


@dataclass
class DoaResult:
    scenario: ArrayScenario
    methods: tuple
    angles: dict = field(default_factory=dict)  # method -> (trials, K) with NaN rows
    failures: dict = field(default_factory=dict)
    seed: int = 0

    def rmse(self, method):
        est = self.angles[method]
        ok = np.all(np.isfinite(est), axis=1)
        return np.sqrt(np.mean((est[ok] - np.asarray(self.scenario.angles)) ** 2, axis=0))

    def rows(self):
        out = []
        truth = np.asarray(self.scenario.angles)
        for m in self.methods:
            est = self.angles[m]
            ok = np.all(np.isfinite(est), axis=1)
            sq = (est[ok] - truth) ** 2
            n_ok = int(ok.sum())
            for k, ang in enumerate(truth):
                mse = float(sq[:, k].mean()) if n_ok else math.nan
                se = float(sq[:, k].std(ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else math.nan
                out.append(ResultRow(m, None, f"angle_{ang:g}", mse, se, None, n_ok,
                                     len(est) - n_ok, self.seed))
        return out

    def rmse_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "source_deg", "rmse_deg", "trials", "failed"])
        for m in self.methods:
            r = self.rmse(m)
            n_fail = int(np.sum(~np.all(np.isfinite(self.angles[m]), axis=1)))
            for ang, v in zip(self.scenario.angles, r):
                w.writerow([m, repr(ang), repr(float(v)), len(self.angles[m]) - n_fail, n_fail])
        return buf.getvalue()

    def angles_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k = self.scenario.n_sources
        w.writerow(["trial", "method"] + [f"est_{i + 1}" for i in range(k)])
        for m in self.methods:
            for t, row in enumerate(self.angles[m]):
                w.writerow([t, m] + [repr(float(x)) for x in row])
        return buf.getvalue()


def doa_pipeline(scenario: ArrayScenario, trials=20, seed=0, methods=DOA_METHODS,
                 out: Optional[str] = None) -> DoaResult:
    """Monte Carlo DOA comparison; trial ``i`` uses seed ``seed + i``.

    With ``out`` set, writes ``<out>`` (result rows), ``<out>.rmse.csv`` and
    ``<out>.angles.csv``.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in DOA_METHODS:
            raise ValueError(f"unknown front end {m!r}")
    res = DoaResult(scenario, methods, seed=seed)
    for m in methods:
        res.angles[m] = np.full((trials, scenario.n_sources), np.nan)
        res.failures[m] = []
    for t in range(trials):
        y = gen_snapshots(scenario, seed + t)
        for m in methods:
            try:
                cov = estimate_covariance(y, m, seed + t)
                res.angles[m][t] = doa_estimate(cov, scenario.n_sources, spacing=scenario.spacing)
            except (OneBitError, np.linalg.LinAlgError) as exc:
                res.failures[m].append((t, str(exc)))
    if out is not None:
        meta = {"scenario": scenario.to_dict(), "trials": trials, "seed": seed,
                "snr_definition": "summed source power per sensor / noise power"}
        import json

        head = f"# doa={json.dumps(meta, sort_keys=True)}\n"
        atomic_write(out, head + rows_to_csv(res.rows()))
        atomic_write(f"{out}.rmse.csv", head + res.rmse_csv())
        atomic_write(f"{out}.angles.csv", head + res.angles_csv())
    return res
