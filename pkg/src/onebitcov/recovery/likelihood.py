"""Grouped one-bit likelihoods and their derivatives.

Samples sharing the same threshold pair ``(v1, v2)`` are exchangeable, so the
likelihood only needs per-group outcome counts. Outcomes are ordered
``(+,+), (+,-), (-,+), (-,-)``. Parameter arrays broadcast over any leading
batch shape; thresholds are 1-D over groups, so results have shape
``batch + (G, 4)``.
"""

import numpy as np
from scipy import special

from ..gauss import SQRT_2PI, TWO_PI, bvn_orthant

OUTCOMES = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
_X1 = OUTCOMES[:, 0].astype(float)
_X2 = OUTCOMES[:, 1].astype(float)
_TAU = _X1 * _X2

RHO_CLAMP = 1.0 - 1e-9


def outcome_index(x1, x2):
    return (np.asarray(x1) < 0) * 2 + (np.asarray(x2) < 0)


def group_pairs(x1, x2, v1, v2):
    """Collapse a two-channel record to ``(v1[G], v2[G], counts[G, 4])``."""
    keys = np.stack([np.asarray(v1, float), np.asarray(v2, float)], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    counts = np.zeros((len(uniq), 4))
    np.add.at(counts, (inv.ravel(), outcome_index(x1, x2)), 1.0)
    return uniq[:, 0], uniq[:, 1], counts


def group_channel(x, v):
    """Collapse one channel to ``(v[G], counts[G, 2])`` with ``[n_plus, n_minus]``."""
    uniq, inv = np.unique(np.asarray(v, float), return_inverse=True)
    counts = np.zeros((len(uniq), 2))
    np.add.at(counts, (inv.ravel(), (np.asarray(x) < 0).astype(int)), 1.0)
    return uniq, counts


# -- single channel -----------------------------------------------------------

def channel_terms(sigma, v):
    """Return ``p, 1-p, dp/dsigma, d2p/dsigma2`` on shape ``batch + (G,)``."""
    s = np.asarray(sigma, float)[..., None]
    w = v / s
    p = special.ndtr(-w)
    pm = special.ndtr(w)
    e = np.exp(-0.5 * w * w) / SQRT_2PI
    d1 = v / (s * s) * e
    d2 = (v**3 - 2.0 * v * s * s) / s**5 * e
    return p, pm, d1, d2


def channel_loglik(sigma, v, counts):
    p, pm, _, _ = channel_terms(sigma, v)
    with np.errstate(divide="ignore"):
        lp = np.where(counts[..., 0] > 0, np.log(p), 0.0)
        lm = np.where(counts[..., 1] > 0, np.log(pm), 0.0)
    return np.sum(counts[..., 0] * lp + counts[..., 1] * lm, axis=-1)


def channel_score(sigma, v, counts):
    """First and second derivative of the channel log-likelihood in sigma."""
    p, pm, d1, d2 = channel_terms(sigma, v)
    npl, nmi = counts[..., 0], counts[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(npl > 0, npl * d1 / p, 0.0) - np.where(nmi > 0, nmi * d1 / pm, 0.0)
        h = np.where(npl > 0, npl * (p * d2 - d1 * d1) / (p * p), 0.0) + np.where(
            nmi > 0, nmi * (-pm * d2 - d1 * d1) / (pm * pm), 0.0
        )
    return np.sum(g, axis=-1), np.sum(h, axis=-1)


# -- pair -----------------------------------------------------------------------

def _expand(sigma1, sigma2, sigma12):
    s1 = np.asarray(sigma1, float)[..., None, None]
    s2 = np.asarray(sigma2, float)[..., None, None]
    s12 = np.asarray(sigma12, float)[..., None, None]
    return s1, s2, s12


def outcome_probs(sigma1, sigma2, sigma12, v1, v2):
    """``o[..., g, j] = Pr{x = outcome j}`` at group ``g``."""
    s1, s2, s12 = _expand(sigma1, sigma2, sigma12)
    w1 = np.asarray(v1, float)[:, None] / s1
    w2 = np.asarray(v2, float)[:, None] / s2
    rho = s12 / (s1 * s2)
    return bvn_orthant(_X1 * w1, _X2 * w2, _TAU * rho)


def _pdf(z1, z2, r):
    om = 1.0 - r * r
    u = z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2
    return np.exp(-0.5 * u / om) / (TWO_PI * np.sqrt(om))


def _g(k1, k2, r):
    cond = special.ndtr(-(k2 - r * k1) / np.sqrt(1.0 - r * r))
    return k1 * np.exp(-0.5 * k1 * k1) / SQRT_2PI * cond - r * _pdf(k1, k2, r)


def outcome_grad(sigma1, sigma2, sigma12, v1, v2):
    """``d o / d theta`` with ``theta = (sigma1, sigma2, sigma12)``.

    Shape ``batch + (G, 4, 3)``. For outcome ``x`` with ``z_i = x_i v_i / s_i``
    and ``tau = x1 x2`` the entries are ``g(z1, z2, tau rho) / s1``,
    ``g(z2, z1, tau rho) / s2`` and ``tau f(z1, z2 | tau rho) / (s1 s2)``.
    """
    s1, s2, s12 = _expand(sigma1, sigma2, sigma12)
    z1 = _X1 * np.asarray(v1, float)[:, None] / s1
    z2 = _X2 * np.asarray(v2, float)[:, None] / s2
    r = _TAU * s12 / (s1 * s2)
    d1 = _g(z1, z2, r) / s1
    d2 = _g(z2, z1, r) / s2
    d12 = _TAU * _pdf(z1, z2, r) / (s1 * s2)
    return np.stack(np.broadcast_arrays(d1, d2, d12), axis=-1)


def pair_loglik(sigma1, sigma2, sigma12, v1, v2, counts):
    o = outcome_probs(sigma1, sigma2, sigma12, v1, v2)
    with np.errstate(divide="ignore"):
        lo = np.where(counts > 0, np.log(o), 0.0)
    return np.sum(counts * lo, axis=(-2, -1))


def pair_grad(sigma1, sigma2, sigma12, v1, v2, counts):
    """Gradient of the pair log-likelihood, shape ``batch + (3,)``."""
    o = outcome_probs(sigma1, sigma2, sigma12, v1, v2)
    do = outcome_grad(sigma1, sigma2, sigma12, v1, v2)
    with np.errstate(divide="ignore", invalid="ignore"):
        wts = np.where(counts > 0, counts / o, 0.0)
    return np.sum(wts[..., None] * do, axis=(-3, -2))


def sigma12_score(sigma1, sigma2, sigma12, v1, v2, counts):
    """First and second derivative of the pair log-likelihood in sigma12 with
    the standard deviations held fixed."""
    s1, s2, s12 = _expand(sigma1, sigma2, sigma12)
    w1 = np.asarray(v1, float)[:, None] / s1
    w2 = np.asarray(v2, float)[:, None] / s2
    rho = s12 / (s1 * s2)
    o = bvn_orthant(_X1 * w1, _X2 * w2, _TAU * rho)
    ss = s1 * s2
    f = _pdf(w1, w2, rho)
    om = 1.0 - rho * rho
    u = w1 * w1 + w2 * w2 - 2.0 * rho * w1 * w2
    df = f * ((rho + w1 * w2) / om - rho * u / (om * om))
    d1 = _TAU * f / ss
    d2 = _TAU * df / (ss * ss)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(counts > 0, counts * d1 / o, 0.0)
        h = np.where(counts > 0, counts * (o * d2 - d1 * d1) / (o * o), 0.0)
    return np.sum(g, axis=(-2, -1)), np.sum(h, axis=(-2, -1))


def pair_fim(sigma1, sigma2, sigma12, v1, v2, weights):
    """Expected information ``sum_g weights[g] sum_j do do^T / o``.

    ``weights`` holds the number of samples taken at each threshold pair.
    """
    o = outcome_probs(sigma1, sigma2, sigma12, v1, v2)
    do = outcome_grad(sigma1, sigma2, sigma12, v1, v2)
    outer = do[..., :, None] * do[..., None, :] / o[..., None, None]
    per_group = np.sum(outer, axis=-3)
    return np.sum(np.asarray(weights, float)[:, None, None] * per_group, axis=-3)
