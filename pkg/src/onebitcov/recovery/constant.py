"""Constant-threshold estimator: closed-form standard deviations and a
truncated tetrachoric (Hermite) series solved for the correlation."""

import math

import numpy as np
from scipy import optimize, special

from ..errors import IllPosedError, SaturationError
from ..gauss import bvn_orthant
from .likelihood import RHO_CLAMP

DEFAULT_ORDER = 20
HALF_GUARD = 1e-6


def sigma_from_prob(p, v):
    """Batched ``v / Q^{-1}(p)``; NaN where saturated or ill-posed."""
    p = np.asarray(p, float)
    v = np.broadcast_to(np.asarray(v, float), p.shape)
    bad = (p <= 0) | (p >= 1) | (np.abs(p - 0.5) <= HALF_GUARD)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = v / -special.ndtri(np.where(bad, 0.25, p))
    # p on the wrong side of 1/2 for the threshold sign gives s <= 0
    return np.where(bad | ~(s > 0), np.nan, s)


def const_sigma(x, v):
    """Standard deviation of one channel from its sign record at threshold ``v``."""
    x = np.asarray(x)
    p = float(np.mean(x > 0))
    if p <= 0.0 or p >= 1.0:
        raise SaturationError(f"all samples on one side of the threshold (p={p})")
    if abs(p - 0.5) <= HALF_GUARD:
        raise IllPosedError("empirical probability at 1/2; standard deviation unbounded")
    s = sigma_from_prob(p, v)
    if not np.isfinite(s):
        raise IllPosedError(f"p={p} is on the wrong side of 1/2 for threshold {v}")
    return float(s)


def series_coefficients(h, k, order=DEFAULT_ORDER):
    """Polynomial coefficients (ascending powers of rho) of the orthant
    probability ``Pr{Y1 > h, Y2 > k}`` truncated after ``order + 1`` terms.

    ``h`` and ``k`` may be arrays; the coefficient axis is last.
    """
    h = np.asarray(h, float)
    k = np.asarray(k, float)
    c = np.empty(np.broadcast(h, k).shape + (order + 2,))
    c[..., 0] = special.ndtr(-h) * special.ndtr(-k)
    pref = np.exp(-0.5 * (h * h + k * k)) / math.pi
    a, b = h / math.sqrt(2.0), k / math.sqrt(2.0)
    # H_j(a) H_j(b) by the three-term recurrence, both arguments at once
    ha_prev, ha = np.zeros_like(a), np.ones_like(a)
    hb_prev, hb = np.zeros_like(b), np.ones_like(b)
    for j in range(order + 1):
        c[..., j + 1] = pref * ha * hb / (2.0 ** (j + 1) * math.factorial(j + 1))
        ha_prev, ha = ha, 2.0 * a * ha - 2.0 * j * ha_prev
        hb_prev, hb = hb, 2.0 * b * hb - 2.0 * j * hb_prev
    return c


def _rho_guess(p1, p2, p12):
    # arcsine law on the centered sign correlation
    mu1, mu2 = 2 * p1 - 1, 2 * p2 - 1
    m12 = 4 * p12 - 2 * p1 - 2 * p2 + 1
    den = np.sqrt(np.maximum((1 - mu1 * mu1) * (1 - mu2 * mu2), 1e-300))
    return np.sin(0.5 * np.pi * np.clip((m12 - mu1 * mu2) / den, -1, 1))


def rho_by_bisection(p12, h, k):
    lo, hi = -RHO_CLAMP, RHO_CLAMP
    f = lambda r: bvn_orthant(h, k, r) - p12
    flo, fhi = f(lo), f(hi)
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=1e-14)


def _companion_roots(coef):
    """Roots of each row of ascending coefficients ``(B, d + 1)``, as ``(B, d)``.

    Uses the same companion matrix as ``np.roots``; rows with a vanishing
    leading coefficient are solved one at a time.
    """
    d = coef.shape[-1] - 1
    lead = coef[:, -1]
    scale = np.abs(coef).max(axis=-1)
    regular = np.abs(lead) > 1e-300 * np.maximum(scale, 1e-300)
    out = np.full((coef.shape[0], d), np.nan + 0j)
    if regular.any():
        desc = coef[regular, ::-1]
        comp = np.zeros((desc.shape[0], d, d))
        comp[:, 0, :] = -desc[:, 1:] / desc[:, :1]
        idx = np.arange(d - 1)
        comp[:, idx + 1, idx] = 1.0
        out[regular] = np.linalg.eigvals(comp)
    for b in np.flatnonzero(~regular):
        r = np.roots(coef[b, ::-1])
        out[b, : r.size] = r
    return out


def rho_from_probs_batch(p1, p2, p12, h, k, order=DEFAULT_ORDER):
    """Batched series inversion; returns ``(rho, used_fallback)`` arrays."""
    p1, p2, p12, h, k = np.broadcast_arrays(*(np.atleast_1d(np.asarray(x, float))
                                               for x in (p1, p2, p12, h, k)))
    coef = series_coefficients(h, k, order)
    coef[:, 0] -= p12
    roots = _companion_roots(coef)
    real = np.abs(roots.imag) <= 1e-7 * (1 + np.abs(roots))
    cand = np.where(real & (np.abs(roots.real) < 1.0), roots.real, np.nan)
    guess = _rho_guess(p1, p2, p12)
    have = np.isfinite(cand).any(axis=-1)
    dist = np.where(np.isfinite(cand), np.abs(cand - guess[:, None]), np.inf)
    pick = np.take_along_axis(cand, np.argmin(dist, axis=-1)[:, None], axis=-1)[:, 0]
    rho = np.clip(pick, -RHO_CLAMP, RHO_CLAMP)
    for b in np.flatnonzero(~have):
        rho[b] = rho_by_bisection(p12[b], h[b], k[b])
    return rho, ~have


def rho_from_probs(p1, p2, p12, h, k, order=DEFAULT_ORDER):
    """Solve the truncated series for rho; returns ``(rho, used_fallback)``."""
    rho, fb = rho_from_probs_batch(p1, p2, p12, h, k, order)
    return float(rho[0]), bool(fb[0])


def const_rho(x1, x2, v, sigma1_hat, sigma2_hat, order=DEFAULT_ORDER, v2=None):
    """Correlation from a constant-threshold pair given the standard deviations."""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    v2 = v if v2 is None else v2
    p1, p2 = np.mean(x1 > 0), np.mean(x2 > 0)
    p12 = np.mean((x1 > 0) & (x2 > 0))
    rho, _ = rho_from_probs(p1, p2, p12, v / sigma1_hat, v2 / sigma2_hat, order)
    return rho


def fit_constant_counts(v1, v2, counts, order=DEFAULT_ORDER):
    """Batched constant-threshold fit from outcome counts ``(B, 4)``.

    Returns ``theta (B, 3)`` (NaN rows for failed trials) and a boolean
    array flagging the bisection fallback.
    """
    counts = np.atleast_2d(np.asarray(counts, float))
    n = counts.sum(axis=-1)
    p1 = (counts[:, 0] + counts[:, 1]) / n
    p2 = (counts[:, 0] + counts[:, 2]) / n
    p12 = counts[:, 0] / n
    s1 = sigma_from_prob(p1, v1)
    s2 = sigma_from_prob(p2, v2)
    theta = np.full((len(n), 3), np.nan)
    fallback = np.zeros(len(n), bool)
    ok = np.flatnonzero(np.isfinite(s1) & np.isfinite(s2))
    if ok.size:
        rho, fb = rho_from_probs_batch(p1[ok], p2[ok], p12[ok], v1 / s1[ok], v2 / s2[ok], order)
        theta[ok] = np.stack([s1[ok], s2[ok], rho * s1[ok] * s2[ok]], axis=-1)
        fallback[ok] = fb
    return theta, fallback
