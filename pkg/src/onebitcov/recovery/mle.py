"""Maximum-likelihood recovery with known time-varying thresholds.

Three stages, all vectorized over a leading batch axis so Monte Carlo
studies can fit thousands of independent records at once:

1. per-channel safeguarded Newton for each standard deviation,
2. safeguarded Newton for the covariance with the standard deviations fixed,
3. optional joint gradient ascent on all three parameters (Armijo line search).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, UnidentifiableError
from .constant import sigma_from_prob
from .likelihood import (
    RHO_CLAMP,
    channel_loglik,
    channel_score,
    group_channel,
    group_pairs,
    pair_grad,
    pair_loglik,
    sigma12_score,
)

log = logging.getLogger(__name__)

MAX_ITER = 50
SCORE_TOL = 1e-8
JOINT_TOL = 1e-7
JOINT_MAX_ITER = 2000
MAX_HALVINGS = 40


# -- initialization -------------------------------------------------------------

def init_sigma(v, counts):
    """Closed-form start from the group whose sign rate is nearest 0.3.

    ``counts`` is ``(B, G, 2)``; returns ``(B,)`` with NaN where every
    group is saturated, zero-threshold or ill-posed.
    """
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts[..., 0] / n
    s = sigma_from_prob(np.where(n > 0, p, 0.0), v)
    dist = np.where(np.isfinite(s) & (v != 0), np.abs(p - 0.3), np.inf)
    best = np.argmin(dist, axis=-1)
    out = np.take_along_axis(s, best[..., None], axis=-1)[..., 0]
    return np.where(np.isfinite(np.min(dist, axis=-1)), out, np.nan)


def init_sigma12(v1, v2, counts, s1, s2):
    """Arcsine law on the smallest-threshold group, scaled by ``s1 s2``."""
    g = np.argmin(np.abs(v1) + np.abs(v2))
    c = counts[..., g, :]
    n = c.sum(axis=-1)
    m12 = (c[..., 0] - c[..., 1] - c[..., 2] + c[..., 3]) / np.maximum(n, 1)
    rho = np.clip(np.sin(0.5 * np.pi * m12), -0.95, 0.95)
    return rho * s1 * s2


# -- stage 1 --------------------------------------------------------------------

def newton_sigma(v, counts, init, max_iter=MAX_ITER, tol=SCORE_TOL):
    """Safeguarded Newton on one channel's log-likelihood.

    ``v``: ``(G,)``; ``counts``: ``(B, G, 2)``; ``init``: ``(B,)``.
    Returns ``sigma, iterations, converged``.
    """
    counts = np.asarray(counts, float)
    sigma = np.array(init, float, copy=True)
    n_tot = counts.sum(axis=(-2, -1))
    iters = np.zeros(sigma.shape, int)
    conv = np.zeros(sigma.shape, bool)
    valid = np.isfinite(sigma) & (sigma > 0)
    ll = np.full(sigma.shape, -np.inf)
    ll[valid] = channel_loglik(sigma[valid], v, counts[valid])

    for _ in range(max_iter):
        act = np.flatnonzero(valid & ~conv)
        if act.size == 0:
            break
        g, h = channel_score(sigma[act], v, counts[act])
        done = np.abs(g) <= tol * n_tot[act]
        conv[act[done]] = True
        act, g, h = act[~done], g[~done], h[~done]
        if act.size == 0:
            break
        iters[act] += 1
        s0 = sigma[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(h < 0, -g / h, np.sign(g) * 0.5 * s0)
        lam = np.ones(act.size)
        pending = np.ones(act.size, bool)
        for _ in range(MAX_HALVINGS):
            idx = np.flatnonzero(pending)
            cand = s0[idx] + lam[idx] * step[idx]
            pos = cand > 0
            cll = np.full(idx.size, -np.inf)
            cll[pos] = channel_loglik(cand[pos], v, counts[act[idx[pos]]])
            ok = cll >= ll[act[idx]] - 1e-12 * np.abs(ll[act[idx]])
            sigma[act[idx[ok]]] = cand[ok]
            ll[act[idx[ok]]] = cll[ok]
            pending[idx[ok]] = False
            if not pending.any():
                break
            lam[pending] *= 0.5
    return sigma, iters, conv


# -- stage 2 --------------------------------------------------------------------

def newton_sigma12(v1, v2, counts, s1, s2, init, max_iter=MAX_ITER, tol=SCORE_TOL):
    """Safeguarded Newton for the covariance with ``s1, s2`` fixed.

    Falls back to bisection on the score for records where Newton does not
    converge inside the clamp ``|rho| < 1 - 1e-9``. Returns
    ``sigma12, iterations, converged, used_bisection``.
    """
    counts = np.asarray(counts, float)
    s1 = np.asarray(s1, float)
    s2 = np.asarray(s2, float)
    ss = s1 * s2
    lim = RHO_CLAMP * ss
    x = np.clip(np.array(init, float, copy=True), -lim, lim)
    n_tot = counts.sum(axis=(-2, -1))
    iters = np.zeros(x.shape, int)
    conv = np.zeros(x.shape, bool)
    valid = np.isfinite(x) & np.isfinite(ss)
    ll = np.full(x.shape, -np.inf)
    ll[valid] = pair_loglik(s1[valid], s2[valid], x[valid], v1, v2, counts[valid])

    for _ in range(max_iter):
        act = np.flatnonzero(valid & ~conv)
        if act.size == 0:
            break
        g, h = sigma12_score(s1[act], s2[act], x[act], v1, v2, counts[act])
        done = np.abs(g) <= tol * n_tot[act]
        conv[act[done]] = True
        act, g, h = act[~done], g[~done], h[~done]
        if act.size == 0:
            break
        iters[act] += 1
        x0 = x[act]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(h < 0, -g / h, np.sign(g) * 0.25 * ss[act])
        lam = np.ones(act.size)
        pending = np.ones(act.size, bool)
        for _ in range(MAX_HALVINGS):
            idx = np.flatnonzero(pending)
            cand = x0[idx] + lam[idx] * step[idx]
            inside = np.abs(cand) < lim[act[idx]]
            cll = np.full(idx.size, -np.inf)
            sel = act[idx[inside]]
            cll[inside] = pair_loglik(s1[sel], s2[sel], cand[inside], v1, v2, counts[sel])
            ok = cll >= ll[act[idx]] - 1e-12 * np.abs(ll[act[idx]])
            x[act[idx[ok]]] = cand[ok]
            ll[act[idx[ok]]] = cll[ok]
            pending[idx[ok]] = False
            if not pending.any():
                break
            lam[pending] *= 0.5

    bis = valid & ~conv
    if bis.any():
        log.info("sigma12 Newton fell back to bisection for %d record(s)", int(bis.sum()))
        x[bis], conv[bis] = _bisect_sigma12(v1, v2, counts[bis], s1[bis], s2[bis], n_tot[bis], tol)
    return x, iters, conv, bis


def _inward_score(s1, s2, x, v1, v2, counts):
    # observed outcomes with vanishing probability make the score 0/0 near the
    # clamp; the likelihood is -inf there, so the ascent direction points inward
    g, _ = sigma12_score(s1, s2, x, v1, v2, counts)
    return np.where(np.isnan(g), -np.sign(x), g)


def _bisect_sigma12(v1, v2, counts, s1, s2, n_tot, tol, n_steps=200):
    ss = s1 * s2
    lo = -RHO_CLAMP * ss
    hi = RHO_CLAMP * ss
    glo = _inward_score(s1, s2, lo, v1, v2, counts)
    ghi = _inward_score(s1, s2, hi, v1, v2, counts)
    bracket = (glo > 0) & (ghi < 0)
    out = np.where(glo <= 0, lo, hi)
    conv = np.zeros(ss.shape, bool)
    if bracket.any():
        a, b = lo[bracket].copy(), hi[bracket].copy()
        sa, sb = s1[bracket], s2[bracket]
        cb = counts[bracket]
        for _ in range(n_steps):
            mid = 0.5 * (a + b)
            gm = _inward_score(sa, sb, mid, v1, v2, cb)
            a = np.where(gm > 0, mid, a)
            b = np.where(gm > 0, b, mid)
            if np.all(b - a <= 1e-15 * np.maximum(1.0, np.abs(mid))):
                break
        mid = 0.5 * (a + b)
        out[bracket] = mid
        gm, _ = sigma12_score(sa, sb, mid, v1, v2, cb)
        conv[bracket] = np.abs(gm) <= max(tol, 1e-6) * n_tot[bracket]
    return out, conv


# -- stage 3 --------------------------------------------------------------------

def _inside(theta):
    s1, s2, s12 = theta[..., 0], theta[..., 1], theta[..., 2]
    return (s1 > 0) & (s2 > 0) & (np.abs(s12) < RHO_CLAMP * s1 * s2)


def joint_ascent(v1, v2, counts, theta0, max_iter=JOINT_MAX_ITER, tol=JOINT_TOL, armijo=1e-4):
    """Gradient ascent on the pair log-likelihood, step ``mu * grad``.

    Each line search starts at ``mu = 1/N`` and halves until the Armijo
    condition holds. Returns ``theta, iterations, converged, failed,
    initial_grad``; ``failed`` marks records whose line search could not
    make progress (they keep their last accepted iterate).
    """
    counts = np.asarray(counts, float)
    theta = np.array(theta0, float, copy=True)
    nb = theta.shape[0]
    n_tot = counts.sum(axis=(-2, -1))
    iters = np.zeros(nb, int)
    conv = np.zeros(nb, bool)
    failed = ~np.all(np.isfinite(theta), axis=-1) | ~_inside(theta)
    ll = np.full(nb, -np.inf)
    grad = np.zeros((nb, 3))
    ok0 = ~failed
    ll[ok0] = pair_loglik(*theta[ok0].T, v1, v2, counts[ok0])
    grad[ok0] = pair_grad(*theta[ok0].T, v1, v2, counts[ok0])
    grad0 = grad.copy()

    for _ in range(max_iter):
        done = np.max(np.abs(grad), axis=-1) <= tol * n_tot
        conv |= done & ~failed
        act = np.flatnonzero(~conv & ~failed)
        if act.size == 0:
            break
        iters[act] += 1
        g = grad[act]
        mu = 1.0 / n_tot[act]
        gg = np.sum(g * g, axis=-1)
        pending = np.ones(act.size, bool)
        for _ in range(MAX_HALVINGS + 20):
            idx = np.flatnonzero(pending)
            cand = theta[act[idx]] + mu[idx, None] * g[idx]
            ins = _inside(cand)
            cll = np.full(idx.size, -np.inf)
            sel = act[idx[ins]]
            cll[ins] = pair_loglik(*cand[ins].T, v1, v2, counts[sel])
            ok = cll >= ll[act[idx]] + armijo * mu[idx] * gg[idx]
            acc = act[idx[ok]]
            theta[acc] = cand[ok]
            ll[acc] = cll[ok]
            pending[idx[ok]] = False
            if not pending.any():
                break
            mu[pending] *= 0.5
        failed[act[pending]] = True
        moved = act[~pending]
        if moved.size:
            grad[moved] = pair_grad(*theta[moved].T, v1, v2, counts[moved])
    return theta, iters, conv, failed & ~conv, grad0


# -- batch drivers -------------------------------------------------------------

@dataclass
class BatchFit:
    """Per-record results of a batched fit (``B`` records)."""

    theta: np.ndarray
    ok: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    flags: dict = field(default_factory=dict)


def channel_counts_from_pairs(counts):
    c = np.asarray(counts, float)
    ch1 = np.stack([c[..., 0] + c[..., 1], c[..., 2] + c[..., 3]], axis=-1)
    ch2 = np.stack([c[..., 0] + c[..., 2], c[..., 1] + c[..., 3]], axis=-1)
    return ch1, ch2


def fit_time_varying(v1, v2, counts, joint=False, max_iter=MAX_ITER):
    """Fit ``(sigma1, sigma2, sigma12)`` for ``B`` records sharing the groups
    ``v1, v2`` (each ``(G,)``) from outcome counts ``(B, G, 4)``."""
    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    counts = np.asarray(counts, float)
    ch1, ch2 = channel_counts_from_pairs(counts)
    s1, it1, c1 = newton_sigma(v1, ch1, init_sigma(v1, ch1), max_iter)
    s2, it2, c2 = newton_sigma(v2, ch2, init_sigma(v2, ch2), max_iter)
    ok = c1 & c2 & np.isfinite(s1) & np.isfinite(s2)
    s12 = np.full(s1.shape, np.nan)
    it12 = np.zeros(s1.shape, int)
    c12 = np.zeros(s1.shape, bool)
    bis = np.zeros(s1.shape, bool)
    if ok.any():
        x0 = init_sigma12(v1, v2, counts[ok], s1[ok], s2[ok])
        s12[ok], it12[ok], c12[ok], bis[ok] = newton_sigma12(
            v1, v2, counts[ok], s1[ok], s2[ok], x0, max_iter
        )
    ok &= c12
    theta = np.stack([s1, s2, s12], axis=-1)
    theta[~ok] = np.nan
    iters = np.stack([it1, it2, it12], axis=-1)
    conv = np.stack([c1, c2, c12], axis=-1)
    flags = {"bisection": bis}
    if joint:
        flags["separate_theta"] = theta.copy()
        th = theta.copy()
        jt, jit, jconv, jfail, g0 = joint_ascent(v1, v2, counts[ok], theta[ok])
        th[ok] = jt
        flags["initial_grad"] = np.full((len(s1), 3), np.nan)
        flags["initial_grad"][ok] = g0
        flags["joint_iterations"] = np.zeros(len(s1), int)
        flags["joint_iterations"][ok] = jit
        flags["joint_converged"] = np.zeros(len(s1), bool)
        flags["joint_converged"][ok] = jconv
        flags["line_search_failed"] = np.zeros(len(s1), bool)
        flags["line_search_failed"][ok] = jfail
        theta = th
    return BatchFit(theta, ok, iters, conv, flags)


# -- single-record API -----------------------------------------------------------

def mle_sigma_newton(x, v, init=None, max_iter=MAX_ITER):
    """Maximum-likelihood standard deviation of one channel.

    ``x`` are the signs, ``v`` the per-sample thresholds (scalar or array).
    """
    x = np.asarray(x)
    v = np.broadcast_to(np.asarray(v, float), x.shape)
    if np.all(v == 0):
        raise UnidentifiableError("all thresholds are zero; the amplitude is unidentifiable")
    vg, counts = group_channel(x, v)
    counts = counts[None]
    if init is None:
        init = init_sigma(vg, counts)[0]
        if not np.isfinite(init):
            raise UnidentifiableError("every threshold level is saturated or uninformative")
    s, _, conv = newton_sigma(vg, counts, np.array([init], float), max_iter)
    if not conv[0]:
        raise ConvergenceError("Newton iteration for sigma did not converge", s[0])
    return float(s[0])


def mle_sigma12_newton(x1, x2, v1, v2, sigma1_hat, sigma2_hat, init=None, max_iter=MAX_ITER):
    """Maximum-likelihood covariance with the standard deviations held fixed."""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    v1 = np.broadcast_to(np.asarray(v1, float), x1.shape)
    v2 = np.broadcast_to(np.asarray(v2, float), x2.shape)
    g1, g2, counts = group_pairs(x1, x2, v1, v2)
    counts = counts[None]
    s1 = np.array([sigma1_hat], float)
    s2 = np.array([sigma2_hat], float)
    x0 = init_sigma12(g1, g2, counts, s1, s2) if init is None else np.array([init], float)
    s12, _, conv, _ = newton_sigma12(g1, g2, counts, s1, s2, x0, max_iter)
    if not conv[0]:
        raise ConvergenceError("covariance iteration did not converge", s12[0])
    return float(s12[0])
