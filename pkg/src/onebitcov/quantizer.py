"""Synthetic Gaussian data, threshold schedules and one-bit quantization.

Random numbers come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence``; any ``seed`` argument may also be a ready
``numpy.random.Generator`` which is then used as is.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

SeedLike = Union[int, np.random.Generator, None]

KINDS = ("zero", "constant", "staircase", "gaussian_dither", "sine")


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def dither_rng(seed: SeedLike) -> np.random.Generator:
    """Stream for dither draws.

    An integer seed maps to a child of ``SeedSequence(seed)``, so data drawn
    from ``PCG64(seed)`` and dither quantized with the same seed stay
    independent. Generators are used as given.
    """
    if isinstance(seed, np.random.Generator) or seed is None:
        return make_rng(seed)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1,))))


@dataclass(frozen=True)
class PairParams:
    """Parameters ``[sigma1, sigma2, sigma12]`` of a 2x2 covariance block."""

    sigma1: float
    sigma2: float
    sigma12: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("standard deviations must be positive")
        if not abs(self.sigma12) < self.sigma1 * self.sigma2:
            raise ValueError("|sigma12| must be below sigma1*sigma2")

    @classmethod
    def from_rho(cls, sigma1, sigma2, rho):
        return cls(float(sigma1), float(sigma2), float(rho * sigma1 * sigma2))

    @property
    def rho(self) -> float:
        return self.sigma12 / (self.sigma1 * self.sigma2)

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma12])

    def cov(self) -> np.ndarray:
        return np.array([
            [self.sigma1**2, self.sigma12],
            [self.sigma12, self.sigma2**2],
        ])

    def shifted(self, var1: float, var2: Optional[float] = None) -> "PairParams":
        """Add ``var`` to each diagonal variance (dither equivalence)."""
        var2 = var1 if var2 is None else var2
        return PairParams(
            math.sqrt(self.sigma1**2 + var1), math.sqrt(self.sigma2**2 + var2), self.sigma12
        )

    def to_dict(self):
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "sigma12": self.sigma12}


@dataclass(frozen=True)
class ThresholdSchedule:
    """Per-channel, per-sample thresholds ``v_i(t)``.

    ``values`` meaning depends on ``kind``:

    * ``zero`` -- unused.
    * ``constant`` -- ``(v,)`` or one level per channel.
    * ``staircase`` -- ``l`` levels (or an ``(M, l)`` table); each level is
      held for ``n = N / l`` consecutive samples.
    * ``gaussian_dither`` -- nominal level(s) ``v``; ``dither_std`` gives the
      per-channel standard deviation of the unrecorded random part.
    * ``sine`` -- ``(amplitude, period[, offset])``.
    """

    kind: str
    n_samples: int
    n_channels: int = 2
    values: tuple = ()
    dither_std: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.n_samples < 1 or self.n_channels < 1:
            raise ValueError("schedule needs at least one sample and channel")
        if self.kind == "staircase":
            levels = self._level_table()
            if self.n_samples % levels.shape[1]:
                raise ValueError("N must be divisible by the number of sub-intervals")

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, n_samples, n_channels=2):
        return cls("zero", int(n_samples), int(n_channels))

    @classmethod
    def constant(cls, v, n_samples, n_channels=2):
        return cls("constant", int(n_samples), int(n_channels), _as_tuple(v))

    @classmethod
    def staircase(cls, values, n_samples, n_channels=2):
        return cls("staircase", int(n_samples), int(n_channels), _as_tuple(values))

    @classmethod
    def gaussian_dither(cls, v, std, n_samples, n_channels=2):
        return cls("gaussian_dither", int(n_samples), int(n_channels), _as_tuple(v), _as_tuple(std))

    @classmethod
    def sine(cls, amplitude, period, n_samples, n_channels=2, offset=0.0):
        return cls("sine", int(n_samples), int(n_channels), (float(amplitude), float(period), float(offset)))

    # -- properties -------------------------------------------------------
    @property
    def recorded(self) -> bool:
        """True when the estimator sees the exact thresholds."""
        return self.kind != "gaussian_dither"

    @property
    def n_intervals(self) -> int:
        return self._level_table().shape[1] if self.kind == "staircase" else 1

    def _level_table(self) -> np.ndarray:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = np.broadcast_to(vals, (self.n_channels, vals.size))
        if vals.shape[0] != self.n_channels:
            raise ValueError("per-channel table does not match n_channels")
        return vals

    def dither_variance(self) -> np.ndarray:
        std = np.broadcast_to(np.asarray(self.dither_std, dtype=float), (self.n_channels,))
        return std**2

    # -- materialization --------------------------------------------------
    def nominal(self) -> np.ndarray:
        """The known (recorded) part of the thresholds, shape ``(M, N)``."""
        m, n = self.n_channels, self.n_samples
        if self.kind == "zero":
            return np.zeros((m, n))
        if self.kind in ("constant", "gaussian_dither"):
            lv = self._level_table()[:, :1]
            return np.repeat(lv, n, axis=1)
        if self.kind == "staircase":
            table = self._level_table()
            return np.repeat(table, n // table.shape[1], axis=1)
        amp, period, offset = self.values
        t = np.arange(n)
        return np.broadcast_to(offset + amp * np.sin(2 * np.pi * t / period), (m, n)).copy()

    def materialize(self, seed: SeedLike = None) -> np.ndarray:
        """Explicit thresholds ``(M, N)``; dither draws a fresh realization."""
        v = self.nominal()
        if self.kind == "gaussian_dither":
            rng = dither_rng(seed)
            std = np.sqrt(self.dither_variance())[:, None]
            v = v + std * rng.standard_normal(v.shape)
        return v

    def with_channels(self, n_channels: int) -> "ThresholdSchedule":
        """Same schedule on ``n_channels`` channels (per-channel tables are tiled)."""
        vals = self.values
        std = self.dither_std
        if self.kind == "staircase" and np.ndim(vals) == 2 or (
            self.kind in ("constant", "gaussian_dither") and len(vals) > 1
        ):
            reps = n_channels // self.n_channels
            arr = np.asarray(vals, dtype=float)
            vals = _as_tuple(np.concatenate([arr] * reps, axis=0))
        if len(std) > 1:
            std = _as_tuple(np.tile(np.asarray(std, dtype=float), n_channels // self.n_channels))
        return ThresholdSchedule(self.kind, self.n_samples, n_channels, vals, std)

    def subset(self, channels: Sequence[int]) -> "ThresholdSchedule":
        vals, std = self.values, self.dither_std
        chans = list(channels)
        arr = np.asarray(vals, dtype=float)
        if (self.kind == "staircase" and arr.ndim == 2) or (
            self.kind in ("constant", "gaussian_dither") and arr.size > 1
        ):
            vals = _as_tuple(arr[chans])
        if len(std) > 1:
            std = _as_tuple(np.asarray(std)[chans])
        return ThresholdSchedule(self.kind, self.n_samples, len(chans), vals, std)

    def to_dict(self):
        d = {"kind": self.kind, "n_samples": self.n_samples, "n_channels": self.n_channels}
        if self.values:
            d["values"] = _to_list(self.values)
        if self.dither_std:
            d["dither_std"] = _to_list(self.dither_std)
        return d

    @classmethod
    def from_dict(cls, d):
        allowed = {"kind", "n_samples", "n_channels", "values", "dither_std"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown schedule keys: {sorted(extra)}")
        return cls(
            d["kind"],
            int(d["n_samples"]),
            int(d.get("n_channels", 2)),
            _as_tuple(d.get("values", ())),
            _as_tuple(d.get("dither_std", ())),
        )


def _as_tuple(v):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        return (float(arr),)
    if arr.ndim == 1:
        return tuple(float(x) for x in arr)
    return tuple(tuple(float(x) for x in row) for row in arr)


def _to_list(t):
    return [list(x) if isinstance(x, tuple) else x for x in t]


@dataclass
class OneBitBatch:
    """Sign observations ``x(t) = sign(y(t) - v(t))``.

    ``signs`` is an ``(M, N)`` int8 array; complex batches carry the
    quadrature signs in ``imag_signs``. ``thresholds`` holds the realized
    thresholds only when the schedule is recorded.
    """

    signs: np.ndarray
    schedule: ThresholdSchedule
    seed: int = 0
    imag_signs: Optional[np.ndarray] = None
    thresholds: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=np.int8)
        if self.signs.ndim != 2:
            raise ValueError("signs must be an (M, N) array")
        if not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be +/-1")
        if self.signs.shape != (self.schedule.n_channels, self.schedule.n_samples):
            raise ValueError("schedule does not match the sign array shape")
        if self.imag_signs is not None:
            self.imag_signs = np.asarray(self.imag_signs, dtype=np.int8)
            if self.imag_signs.shape != self.signs.shape:
                raise ValueError("imaginary signs must match the real signs")
        if self.thresholds is None and self.schedule.recorded:
            self.thresholds = self.schedule.nominal()

    @property
    def n_channels(self) -> int:
        return self.signs.shape[0]

    @property
    def n_samples(self) -> int:
        return self.signs.shape[1]

    @property
    def is_complex(self) -> bool:
        return self.imag_signs is not None

    def widely_linear(self) -> "OneBitBatch":
        """Stack real and imaginary sign rows into a ``2M`` real batch."""
        if not self.is_complex:
            raise ValueError("batch is already real")
        sched = self.schedule.with_channels(2 * self.n_channels)
        thr = None
        if self.thresholds is not None:
            thr = np.vstack([self.thresholds, self.thresholds])
        return OneBitBatch(np.vstack([self.signs, self.imag_signs]), sched, self.seed, None, thr)

    # -- serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        """Binary layout (little endian)::

            b"OBIT" | u8 version=1 | u8 flags (bit0: complex) |
            u32 M | u64 N | i64 seed | u32 len | schedule JSON (utf-8) |
            packed sign bits, row-major, 1 == +1  [real, then imaginary]
        """
        sched = json.dumps(self.schedule.to_dict(), sort_keys=True).encode()
        flags = 1 if self.is_complex else 0
        head = struct.pack("<4sBBIQqI", MAGIC, 1, flags, self.n_channels, self.n_samples,
                           int(self.seed), len(sched))
        body = np.packbits(self.signs > 0, axis=None).tobytes()
        if self.is_complex:
            body += np.packbits(self.imag_signs > 0, axis=None).tobytes()
        return head + sched + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "OneBitBatch":
        size = struct.calcsize("<4sBBIQqI")
        magic, version, flags, m, n, seed, slen = struct.unpack("<4sBBIQqI", data[:size])
        if magic != MAGIC or version != 1:
            raise ValueError("not a one-bit batch file")
        sched = ThresholdSchedule.from_dict(json.loads(data[size:size + slen].decode()))
        off = size + slen
        nbytes = (m * n + 7) // 8

        def unpack(buf):
            bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: m * n]
            return (2 * bits.astype(np.int8) - 1).reshape(m, n)

        signs = unpack(data[off:off + nbytes])
        imag = unpack(data[off + nbytes:off + 2 * nbytes]) if flags & 1 else None
        return cls(signs, sched, seed, imag)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schedule=" + json.dumps(self.schedule.to_dict(), sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = [f"x{i + 1}" for i in range(self.n_channels)]
        if self.is_complex:
            cols += [f"xi{i + 1}" for i in range(self.n_channels)]
        w.writerow(["t"] + cols)
        rows = self.signs if not self.is_complex else np.vstack([self.signs, self.imag_signs])
        for t in range(self.n_samples):
            w.writerow([t + 1] + rows[:, t].tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "OneBitBatch":
        lines = text.splitlines()
        sched = ThresholdSchedule.from_dict(json.loads(lines[0].split("=", 1)[1]))
        rows = list(csv.reader(lines[1:]))
        header, data = rows[0], np.array(rows[1:], dtype=np.int64)[:, 1:].astype(np.int8)
        m = sched.n_channels
        signs = data[:, :m].T
        imag = data[:, m:2 * m].T if len(header) > 1 + m else None
        return cls(signs, sched, seed, imag)


MAGIC = b"OBIT"


def _cov_of(params) -> np.ndarray:
    if isinstance(params, PairParams):
        return params.cov()
    return np.asarray(params)


def sample_gaussian(params, n_samples: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``n_samples`` zero-mean Gaussian vectors; returns ``(M, N)``.

    Raises ``numpy.linalg.LinAlgError`` when the covariance is not
    positive definite.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    cov = np.asarray(_cov_of(params), dtype=float)
    chol = np.linalg.cholesky(cov)
    rng = make_rng(seed)
    return chol @ rng.standard_normal((cov.shape[0], n_samples))


def sample_complex_gaussian(cov, n_samples: int, seed: SeedLike = None) -> np.ndarray:
    """Circular complex Gaussian with ``E[y y^H] = cov``; returns ``(M, N)``."""
    cov = np.asarray(cov, dtype=complex)
    chol = np.linalg.cholesky(cov)
    rng = make_rng(seed)
    m = cov.shape[0]
    w = (rng.standard_normal((m, n_samples)) + 1j * rng.standard_normal((m, n_samples))) / math.sqrt(2)
    return chol @ w


def _sign(a):
    return np.where(a >= 0, 1, -1).astype(np.int8)


def _thresholds(y_shape, sched, seed):
    if (sched.n_channels, sched.n_samples) != tuple(y_shape):
        raise ValueError(
            f"data shape {tuple(y_shape)} does not match schedule "
            f"({sched.n_channels}, {sched.n_samples})"
        )
    return sched.materialize(seed)


def quantize_real(y, sched: ThresholdSchedule, seed: SeedLike = None) -> OneBitBatch:
    """One-bit quantize ``y`` (``(M, N)``) against the schedule; sign(0) = +1."""
    y = np.asarray(y, dtype=float)
    v = _thresholds(y.shape, sched, seed)
    thr = v if sched.recorded else None
    s = int(seed) if isinstance(seed, (int, np.integer)) else 0
    return OneBitBatch(_sign(y - v), sched, s, None, thr)


def quantize_complex(y, sched: ThresholdSchedule, seed: SeedLike = None) -> OneBitBatch:
    """Quantize real and imaginary parts against the same thresholds.

    For dither schedules the real and imaginary rails get independent
    dither realizations.
    """
    y = np.asarray(y, dtype=complex)
    rng = dither_rng(seed) if not sched.recorded else None
    v_re = _thresholds(y.shape, sched, rng)
    v_im = v_re if sched.recorded else sched.materialize(rng)
    thr = v_re if sched.recorded else None
    s = int(seed) if isinstance(seed, (int, np.integer)) else 0
    return OneBitBatch(_sign(y.real - v_re), sched, s, _sign(y.imag - v_im), thr)
