"""Scalar and bivariate Gaussian special functions.

Everything here is vectorized over numpy broadcasting. The orthant routine is
Genz's port of the Drezner-Wesolowsky algorithm: a 20-point Gauss-Legendre
rule over the arcsine-transformed correlation integral, with the series
expansion of Drezner for |rho| >= 0.925.
"""

import math

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "q",
    "q_inv",
    "norm_pdf",
    "bvn_pdf",
    "bvn_pdf_drho",
    "bvn_orthant",
    "hermite",
    "g_fn",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
TWO_PI = 2.0 * math.pi

# 20-point Gauss-Legendre half rule on [-1, 1]; Genz uses x -> 1 -/+ x
_GL_X = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
_X = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_W = np.concatenate([_GL_W, _GL_W])


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} must be finite")


def _check_rho(rho, strict=True):
    r = np.asarray(rho, dtype=float)
    bad = np.abs(r) >= 1.0 if strict else np.abs(r) > 1.0
    if np.any(bad) or np.any(np.isnan(r)):
        raise DomainError("correlation must satisfy |rho| < 1")
    return r


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def q(a):
    """Upper tail of the standard normal, ``Pr{Z > a}``."""
    a = np.asarray(a, dtype=float)
    _check_finite(a, "a")
    return _scalar(special.ndtr(-a))


def q_inv(p):
    """Inverse of :func:`q` on the open interval (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0)) or np.any(~(p < 1.0)):
        raise DomainError("q_inv requires 0 < p < 1")
    return _scalar(-special.ndtri(p))


def norm_pdf(a):
    a = np.asarray(a, dtype=float)
    return _scalar(np.exp(-0.5 * a * a) / SQRT_2PI)


def bvn_pdf(y1, y2, rho):
    """Standard bivariate normal density with correlation ``rho``."""
    r = _check_rho(rho)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    om = 1.0 - r * r
    u = y1 * y1 - 2.0 * r * y1 * y2 + y2 * y2
    return _scalar(np.exp(-0.5 * u / om) / (TWO_PI * np.sqrt(om)))


def bvn_pdf_drho(y1, y2, rho):
    """Derivative of :func:`bvn_pdf` with respect to ``rho``."""
    r = _check_rho(rho)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    om = 1.0 - r * r
    u = y1 * y1 - 2.0 * r * y1 * y2 + y2 * y2
    f = np.exp(-0.5 * u / om) / (TWO_PI * np.sqrt(om))
    return _scalar(f * ((r + y1 * y2) / om - r * u / (om * om)))


def _bvnu_low(h, k, r):
    # |r| < 0.925: integrate the Price derivative over theta in [0, asin r]
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    sn = np.sin(asr[..., None] * _X)
    terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
    return terms @ _W * asr / TWO_PI + special.ndtr(-h) * special.ndtr(-k)


def _bvnu_high(h, k, r):
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    a_s = 1.0 - r * r
    a = np.sqrt(a_s)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        asr = -0.5 * (bs / a_s + hk)
        bvn = np.where(
            asr > -100.0,
            a * np.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s),
            0.0,
        )
        b = np.sqrt(bs)
        sp = SQRT_2PI * special.ndtr(-b / a)
        corr = np.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        bvn = bvn - np.where(hk > -100.0, corr, 0.0)

        half = (a / 2.0)[..., None]
        xs = (half * _X) ** 2
        asr_i = -0.5 * (bs[..., None] / xs + hk[..., None])
        sp_i = 1.0 + c[..., None] * xs * (1.0 + 5.0 * d[..., None] * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-0.5 * hk[..., None] * xs / (1.0 + rs) ** 2) / rs
        contrib = np.where(asr_i > -100.0, np.exp(asr_i) * (sp_i - ep), 0.0)
        bvn = (half[..., 0] * (contrib @ _W) - bvn) / TWO_PI

    pos = ~neg
    out = np.empty_like(bvn)
    out[pos] = bvn[pos] + special.ndtr(-np.maximum(h[pos], k[pos]))
    # k is already sign-flipped on the negative branch
    hn, kf, bn = h[neg], k[neg], bvn[neg]
    lower = np.where(
        hn < 0,
        special.ndtr(kf) - special.ndtr(hn),
        special.ndtr(-hn) - special.ndtr(-kf),
    )
    out[neg] = np.where(hn >= kf, -bn, lower - bn)
    return out


def bvn_orthant(k1, k2, rho):
    """Upper orthant probability ``Pr{Y1 > k1, Y2 > k2}`` for a standard
    bivariate normal with correlation ``rho``.

    ``|rho| == 1`` returns the degenerate closed-form limit.
    """
    r = _check_rho(rho, strict=False)
    h = np.asarray(k1, dtype=float)
    k = np.asarray(k2, dtype=float)
    h, k, r = np.broadcast_arrays(h, k, r)
    if np.any(np.isnan(h)) or np.any(np.isnan(k)):
        raise DomainError("limits must not be NaN")
    h = np.array(h, dtype=float)
    k = np.array(k, dtype=float)
    r = np.array(r, dtype=float)

    out = np.empty(h.shape)
    one = r == 1.0
    mone = r == -1.0
    out[one] = special.ndtr(-np.maximum(h[one], k[one]))
    out[mone] = np.maximum(0.0, special.ndtr(-k[mone]) - special.ndtr(h[mone]))

    inner = ~(one | mone)
    hi = inner & (np.abs(r) >= 0.925)
    lo = inner & ~hi
    with np.errstate(over="ignore", invalid="ignore"):
        # infinite limits reduce to univariate tails
        if np.any(lo):
            hl, kl, rl = h[lo], k[lo], r[lo]
            fin = np.isfinite(hl) & np.isfinite(kl)
            vals = np.empty(hl.shape)
            vals[fin] = _bvnu_low(hl[fin], kl[fin], rl[fin])
            vals[~fin] = _infinite_limits(hl[~fin], kl[~fin])
            out[lo] = vals
        if np.any(hi):
            hh, kh, rh = h[hi], k[hi], r[hi]
            fin = np.isfinite(hh) & np.isfinite(kh)
            vals = np.empty(hh.shape)
            vals[fin] = _bvnu_high(hh[fin], kh[fin], rh[fin])
            vals[~fin] = _infinite_limits(hh[~fin], kh[~fin])
            out[hi] = vals
    return _scalar(np.clip(out, 0.0, 1.0))


def _infinite_limits(h, k):
    out = np.where((h == np.inf) | (k == np.inf), 0.0, np.nan)
    out = np.where((h == -np.inf) & (k != np.inf), special.ndtr(-k), out)
    out = np.where((k == -np.inf) & (h != np.inf), special.ndtr(-h), out)
    return out


def hermite(k, a):
    """Physicists' Hermite polynomial ``H_k(a)`` by the three-term recurrence."""
    k = int(k)
    if k < 0:
        raise DomainError("Hermite order must be nonnegative")
    a = np.asarray(a, dtype=float)
    h_prev = np.ones_like(a)
    if k == 0:
        return _scalar(h_prev)
    h = 2.0 * a
    for j in range(1, k):
        h_prev, h = h, 2.0 * a * h - 2.0 * j * h_prev
    return _scalar(h)


def g_fn(k1, k2, rho):
    """Kernel of the standard-deviation derivative of the orthant probability.

    ``sigma1 * d/dsigma1 Pr{Y1 > v/sigma1, Y2 > v/sigma2}`` with
    ``sigma12`` held fixed equals ``g_fn(v/sigma1, v/sigma2, rho)``.
    """
    r = _check_rho(rho)
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    cond = special.ndtr(-(k2 - r * k1) / np.sqrt(1.0 - r * r))
    first = k1 * np.exp(-0.5 * k1 * k1) / SQRT_2PI * cond
    return _scalar(first - r * bvn_pdf(k1, k2, r))
