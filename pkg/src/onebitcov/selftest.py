"""Fast invariant checks run by ``onebitcov selftest``.

Each check returns ``(name, passed, detail)``. Nothing here is Monte Carlo
at scale; the whole suite finishes in seconds.
"""

import math

import numpy as np
from scipy import integrate, special, stats

from .gauss import bvn_orthant, bvn_pdf
from .quantizer import PairParams, ThresholdSchedule
from .recovery.likelihood import (
    channel_loglik,
    channel_score,
    outcome_probs,
    outcome_grad,
    pair_grad,
    pair_loglik,
    sigma12_score,
)
from .recovery.mle import fit_time_varying
from .theory import binomial_moments, fim


def _deriv(f, x, h):
    # five-point central difference
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _random_pair(rng):
    s1, s2 = rng.uniform(0.2, 2.0, 2)
    rho = rng.uniform(-0.9, 0.9)
    g = int(rng.integers(1, 5))
    v1 = rng.uniform(-1.5, 1.5, g) * s1
    v2 = rng.uniform(-1.5, 1.5, g) * s2
    counts = rng.integers(1, 200, (g, 4)).astype(float)
    return np.array([s1, s2, rho * s1 * s2]), v1, v2, counts


def check_scores(n_points=100, seed=1, tol=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        th, v1, v2, counts = _random_pair(rng)
        g = pair_grad(*th, v1, v2, counts)
        fd = np.empty(3)
        for j in range(3):
            e = np.eye(3)[j]
            step = 1e-4 * th[0] * th[1]
            fd[j] = _deriv(lambda t: pair_loglik(*(th + t * e), v1, v2, counts), 0.0, step)
        worst = max(worst, np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1.0))
        ch = counts[:, :2]
        s = th[0]
        gc, _ = channel_score(s, v1, ch)
        fdc = _deriv(lambda x: channel_loglik(x, v1, ch), s, 1e-4 * s)
        worst = max(worst, abs(fdc - gc) / max(abs(gc), 1.0))
    return "score vs finite differences", worst <= tol, f"max rel err {worst:.2e}"


def check_second_derivatives(n_points=100, seed=2, tol=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        th, v1, v2, counts = _random_pair(rng)
        s1, s2, s12 = th
        _, hc = channel_score(s1, v1, counts[:, :2])
        fd = _deriv(lambda x: channel_score(x, v1, counts[:, :2])[0], s1, 1e-4 * s1)
        worst = max(worst, abs(fd - hc) / max(abs(hc), 1.0))
        _, h12 = sigma12_score(s1, s2, s12, v1, v2, counts)
        fd = _deriv(lambda x: sigma12_score(s1, s2, x, v1, v2, counts)[0], s12, 1e-4 * s1 * s2)
        worst = max(worst, abs(fd - h12) / max(abs(h12), 1.0))
    return "second derivatives vs differentiated scores", worst <= tol, f"max rel err {worst:.2e}"


def check_regularity(n_points=100, seed=3, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        th, v1, v2, _ = _random_pair(rng)
        # sum_x o(x) d log o(x) = sum_x d o(x)
        do = outcome_grad(*th, v1, v2)
        worst = max(worst, float(np.max(np.abs(do.sum(axis=-2)))))
    return "outcome-weighted score is zero", worst <= tol, f"max |sum| {worst:.2e}"


def _orthant_quad(h, k, rho):
    sd = math.sqrt(1.0 - rho * rho)
    f = lambda y: math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi) * special.ndtr(-(k - rho * y) / sd)
    val, _ = integrate.quad(f, h, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def check_orthant(n_points=40, seed=4, tol=1e-8):
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_price = 0.0
    for _ in range(n_points):
        h, k = rng.uniform(-3, 3, 2)
        rho = rng.uniform(-0.98, 0.98)
        worst = max(worst, abs(bvn_orthant(h, k, rho) - _orthant_quad(h, k, rho)))
        fd = _deriv(lambda r: bvn_orthant(h, k, r), rho, 2e-4)
        f = bvn_pdf(h, k, rho)
        worst_price = max(worst_price, abs(fd - f) / max(f, 1e-6))
    ok = worst <= tol and worst_price <= 1e-6
    return "orthant probability and Price identity", ok, f"quad err {worst:.1e}, price rel {worst_price:.1e}"


def check_moments(max_n=30, tol=1e-13):
    worst = 0.0
    for n in range(1, max_n + 1):
        for p in (0.0, 0.03, 0.3, 0.5, 0.77, 1.0):
            pmf = stats.binom.pmf(np.arange(n + 1), n, p)
            x = np.arange(n + 1) / n
            ref = [float(np.sum(pmf * x**c)) for c in (2, 3, 4)]
            m = binomial_moments(p, n)
            worst = max(worst, max(abs(a - b) for a, b in zip((m.m2, m.m3, m.m4), ref)))
    return "binomial moments vs enumeration", worst <= tol, f"max err {worst:.1e}"


def check_zero_threshold_fim():
    sched = ThresholdSchedule.zero(1000)
    f0 = fim(PairParams(0.7, 1.3, 0.0), sched)
    f1 = fim(PairParams(0.7, 1.3, 0.4), sched)
    zeros = np.allclose(f0[:2, :], 0.0, atol=1e-12) and np.allclose(f0[:, :2], 0.0, atol=1e-12)
    rank = np.linalg.matrix_rank(f1, tol=1e-9 * np.max(np.abs(f1)))
    return "zero-threshold information is rank deficient", zeros and rank < 3, f"rank {rank}"


def check_joint_update_scaling(seed=5, records=200):
    # the joint refinement moves the separate estimate by O(n^-1/2)
    params = PairParams.from_rho(0.25, 0.6, 0.5)
    steps = np.round(0.1 * np.arange(1, 11), 10)
    probs = outcome_probs(*params.theta, steps, steps)
    rng = np.random.default_rng(seed)
    ns = (100, 1000, 10000)
    med = []
    for n in ns:
        counts = rng.multinomial(n, probs, size=(records, len(steps))).astype(float)
        fit = fit_time_varying(steps, steps, counts, joint=True)
        ok = fit.ok
        med.append(np.median(np.abs(fit.theta[ok, 0] - fit.flags["separate_theta"][ok, 0])))
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0])
    return "joint update shrinks like n^-1/2", abs(slope + 0.5) <= 0.15, f"slope {slope:.3f}"


CHECKS = (
    check_scores,
    check_second_derivatives,
    check_regularity,
    check_orthant,
    check_moments,
    check_zero_threshold_fim,
    check_joint_update_scaling,
)


def run_all():
    return [(name, bool(ok), detail) for name, ok, detail in (c() for c in CHECKS)]
