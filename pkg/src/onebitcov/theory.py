"""Closed-form performance predictions.

Constant thresholds use a Taylor expansion of the closed-form estimators
around the true sign probabilities together with exact binomial moments.
Recorded time-varying thresholds use the inverse Fisher information of the
grouped one-bit likelihood.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError, UnidentifiableError
from .gauss import SQRT_2PI, bvn_orthant, bvn_pdf, g_fn, q
from .quantizer import PairParams, ThresholdSchedule
from .recovery.likelihood import pair_fim

COND_LIMIT = 1e12
SWEEP_GRID = np.round(np.arange(0.1, 1.6 + 1e-9, 0.05), 10)


@dataclass(frozen=True)
class TaylorCoeffs:
    """First and second derivative of ``a -> v / Q^{-1}(a)`` at ``a = p``."""

    h_prime: float
    h_double_prime: float
    p: float


def h_derivatives(sigma, v) -> TaylorCoeffs:
    if v == 0:
        raise UnidentifiableError("zero threshold: the scale is unidentifiable")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    r2 = (v / sigma) ** 2
    h1 = SQRT_2PI * sigma**2 / v * math.exp(0.5 * r2)
    h2 = math.exp(r2) * (4.0 * math.pi * sigma**3 / v**2 - 2.0 * math.pi * sigma)
    return TaylorCoeffs(h1, h2, float(q(v / sigma)))


@lru_cache(maxsize=None)
def stirling2(c: int, k: int) -> float:
    """Stirling number of the second kind by its alternating sum."""
    if c == 0:
        return 1.0 if k == 0 else 0.0
    if k == 0:
        return 0.0
    return sum(
        (-1) ** (k - j) * j ** (c - 1) / (math.factorial(j - 1) * math.factorial(k - j))
        for j in range(1, k + 1)
    )


def falling(n: int, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= n - i
    return out


def raw_count_moment(p, n, c):
    """``E[K^c]`` for ``K ~ Binomial(n, p)``."""
    return sum(stirling2(c, k) * falling(n, k) * p**k for k in range(c + 1))


@dataclass(frozen=True)
class MomentSet:
    """Raw moments ``E[p_hat^k]``, ``k = 1..4``, of a binomial proportion."""

    p: float
    n: int
    m2: float
    m3: float
    m4: float

    @property
    def var_p(self):
        return self.m2 - self.p**2

    @property
    def var_p2(self):
        return self.m4 - self.m2**2

    @property
    def cov_p_p2(self):
        return self.m3 - self.p * self.m2


def binomial_moments(p, n, order=4) -> MomentSet:
    """Moments of ``K / n`` up to ``order`` (at most 4); higher entries are NaN."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability {p} outside [0, 1]")
    if n < 1:
        raise DomainError("need at least one sample")
    if not 1 <= order <= 4:
        raise DomainError("order must be between 1 and 4")
    m = [raw_count_moment(p, n, c) / n**c if c <= order else math.nan for c in (2, 3, 4)]
    return MomentSet(float(p), int(n), *m)


def taylor_var_sigma(sigma, v, n, first_order=False):
    """Approximate variance of the closed-form standard deviation estimator."""
    if n < 2:
        raise DomainError("need N >= 2")
    c = h_derivatives(sigma, v)
    mom = binomial_moments(c.p, n)
    if first_order:
        return c.h_prime**2 * mom.var_p
    lin = c.h_prime - c.h_double_prime * c.p
    quad = c.h_double_prime
    out = lin**2 * mom.var_p + 0.25 * quad**2 * mom.var_p2 + lin * quad * mom.cov_p_p2
    return max(out, 0.0)


@dataclass
class TheoryReport:
    mse_sigma1: float
    mse_sigma2: float
    mse_sigma12: float
    source: str
    fim: Optional[np.ndarray] = None
    l_vector: Optional[np.ndarray] = None
    r_matrix: Optional[np.ndarray] = None
    rank_deficient: bool = False
    info: dict = field(default_factory=dict)

    @property
    def mse(self):
        return np.array([self.mse_sigma1, self.mse_sigma2, self.mse_sigma12])

    def to_dict(self):
        out = {
            "mse_sigma1": self.mse_sigma1,
            "mse_sigma2": self.mse_sigma2,
            "mse_sigma12": self.mse_sigma12,
            "source": self.source,
            "rank_deficient": self.rank_deficient,
        }
        for key, arr in (("fim", self.fim), ("l_vector", self.l_vector), ("r_matrix", self.r_matrix)):
            if arr is not None:
                out[key] = np.asarray(arr).tolist()
        out.update(self.info)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    def to_csv(self, method="", sweep_value="") -> str:
        """Rows in the experiment-result layout with only the theory column filled."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "sweep_value", "parameter", "mse", "se", "theory_mse",
                    "ratio", "trials", "failed", "seed"])
        for name, val in zip(("sigma1", "sigma2", "sigma12"), self.mse):
            w.writerow([method, sweep_value, name, "", "", repr(float(val)), "", 0, 0, ""])
        return buf.getvalue()


def _pair_probs(params: PairParams, v1, v2):
    h, k = v1 / params.sigma1, v2 / params.sigma2
    return float(q(h)), float(q(k)), float(bvn_orthant(h, k, params.rho)), h, k


def r_matrix(p1, p2, p12, n):
    """Covariance of ``(p1_hat, p2_hat, p12_hat)`` from ``n`` samples."""
    return np.array([
        [p1 * (1 - p1), p12 - p1 * p2, p12 * (1 - p1)],
        [p12 - p1 * p2, p2 * (1 - p2), p12 * (1 - p2)],
        [p12 * (1 - p1), p12 * (1 - p2), p12 * (1 - p12)],
    ]) / n


def sensitivity(params: PairParams, v1, v2):
    """Partials of ``p12`` in ``(sigma1, sigma2, sigma12)``."""
    s1, s2, rho = params.sigma1, params.sigma2, params.rho
    h, k = v1 / s1, v2 / s2
    d1 = float(g_fn(h, k, rho)) / s1
    d2 = float(g_fn(k, h, rho)) / s2
    d12 = float(bvn_pdf(h, k, rho)) / (s1 * s2)
    return d1, d2, d12


def taylor_var_sigma12(params: PairParams, v, n, v2=None) -> TheoryReport:
    """First-order variance of the constant-threshold covariance estimator,
    reported together with the second-order variances of both standard
    deviations."""
    v2 = v if v2 is None else v2
    if v == 0 or v2 == 0:
        raise UnidentifiableError("zero threshold: the scale is unidentifiable")
    p1, p2, p12, _, _ = _pair_probs(params, v, v2)
    d1, d2, d12 = sensitivity(params, v, v2)
    hp1 = h_derivatives(params.sigma1, v).h_prime
    hp2 = h_derivatives(params.sigma2, v2).h_prime
    l_vec = np.array([-d1 * hp1 / d12, -d2 * hp2 / d12, 1.0 / d12])
    r = r_matrix(p1, p2, p12, n)
    var12 = float(max(l_vec @ r @ l_vec, 0.0))
    return TheoryReport(
        taylor_var_sigma(params.sigma1, v, n),
        taylor_var_sigma(params.sigma2, v2, n),
        var12,
        "taylor",
        l_vector=l_vec,
        r_matrix=r,
        info={"p1": p1, "p2": p2, "p12": p12},
    )


def _threshold_groups(schedule: ThresholdSchedule, channels=(0, 1)):
    if not schedule.recorded:
        raise ValueError("Fisher information needs recorded thresholds")
    nominal = schedule.nominal()
    i, j = channels
    keys = np.stack([nominal[i], nominal[j]], axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    return uniq[:, 0], uniq[:, 1], counts.astype(float)


def fim(params: PairParams, schedule: ThresholdSchedule, channels=(0, 1)) -> np.ndarray:
    """Fisher information of ``(sigma1, sigma2, sigma12)`` over the whole record."""
    v1, v2, w = _threshold_groups(schedule, channels)
    f = pair_fim(params.sigma1, params.sigma2, params.sigma12, v1, v2, w)
    return 0.5 * (f + f.T)


def fim_report(params: PairParams, schedule: ThresholdSchedule, channels=(0, 1)) -> TheoryReport:
    f = fim(params, schedule, channels)
    cond = np.linalg.cond(f)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        nan = math.nan
        return TheoryReport(nan, nan, nan, "fim", fim=f, rank_deficient=True,
                            info={"condition_number": float(cond)})
    crb = np.linalg.inv(f)
    d = np.diag(crb)
    return TheoryReport(float(d[0]), float(d[1]), float(d[2]), "fim", fim=f,
                        info={"condition_number": float(cond)})


def predict_mse(params: PairParams, schedule: ThresholdSchedule, method=None) -> TheoryReport:
    """Predicted MSE of ``(sigma1, sigma2, sigma12)`` for a threshold strategy.

    ``method`` defaults from the schedule: constant thresholds use the Taylor
    expansion, recorded time-varying ones the inverse Fisher information, and
    Gaussian dither the constant-threshold prediction at the shifted
    parameters ``sigma_i^2 + s_i^2``.
    """
    kind = schedule.kind
    if method is None:
        method = {"constant": "constant", "gaussian_dither": "dither", "zero": "arcsine"}.get(
            kind, "time_varying"
        )
    n = schedule.n_samples
    if method in ("time_varying", "time_varying_joint"):
        return fim_report(params, schedule)
    if method in ("constant", "dither"):
        table = schedule._level_table()
        v1, v2 = float(table[0, 0]), float(table[1 % table.shape[0], 0])
        target = params
        if method == "dither":
            if kind != "gaussian_dither":
                raise ValueError("dither prediction needs a gaussian_dither schedule")
            var = schedule.dither_variance()
            target = params.shifted(var[0], var[1])
        rep = taylor_var_sigma12(target, v1, n, v2)
        rep.info["route"] = method
        return rep
    if method == "arcsine":
        raise UnidentifiableError("zero thresholds: the scale is unidentifiable")
    raise ValueError(f"unknown method {method!r}")


def threshold_sweep(params: PairParams, n, grid=None):
    """Taylor predictions across constant thresholds; returns ``(grid, mse (G, 3))``."""
    grid = SWEEP_GRID if grid is None else np.asarray(grid, float)
    out = np.array([taylor_var_sigma12(params, float(v), n).mse for v in grid])
    return grid, out
