"""Pair-level estimation: one entry point per threshold strategy."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, UnidentifiableError
from ..quantizer import OneBitBatch, PairParams
from .constant import DEFAULT_ORDER, fit_constant_counts
from .likelihood import group_pairs
from .mle import fit_time_varying

METHODS = ("arcsine", "constant", "dither", "time_varying", "time_varying_joint")


@dataclass
class PairEstimate:
    params: PairParams
    method: str
    iterations: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


def fit_counts(method, v1, v2, counts, dither_var=(0.0, 0.0), order=DEFAULT_ORDER):
    """Batched fit of ``B`` records with outcome counts ``(B, G, 4)``.

    Returns ``theta (B, 3)`` with NaN rows for failed records, and a flags
    dict of per-record arrays.
    """
    counts = np.asarray(counts, float)
    v1 = np.atleast_1d(np.asarray(v1, float))
    v2 = np.atleast_1d(np.asarray(v2, float))
    if method in ("time_varying", "time_varying_joint"):
        fit = fit_time_varying(v1, v2, counts, joint=method.endswith("joint"))
        flags = dict(fit.flags)
        flags["iterations"] = fit.iterations
        return fit.theta, flags
    if method in ("constant", "dither"):
        if v1.size != 1 or v2.size != 1:
            raise ValueError(f"{method} needs a single nominal threshold per channel")
        theta, fb = fit_constant_counts(v1[0], v2[0], counts[:, 0, :], order)
        if method == "dither":
            theta = unshift(theta, dither_var)
        return theta, {"bisection": fb}
    raise ValueError(f"unknown pair method {method!r}")


def unshift(theta, dither_var):
    """Remove a known dither variance from shifted-covariance estimates."""
    theta = np.array(theta, float, copy=True)
    d1, d2 = dither_var
    with np.errstate(invalid="ignore"):
        theta[:, 0] = np.sqrt(theta[:, 0] ** 2 - d1)
        theta[:, 1] = np.sqrt(theta[:, 1] ** 2 - d2)
    bad = ~np.all(np.isfinite(theta), axis=-1) | ~(theta[:, 0] > 0) | ~(theta[:, 1] > 0)
    theta[bad] = np.nan
    return theta


def estimate_pair(batch: OneBitBatch, method="time_varying", channels=(0, 1), order=DEFAULT_ORDER):
    """Estimate ``(sigma1, sigma2, sigma12)`` for two channels of a batch."""
    i, j = channels
    sched = batch.schedule
    x1, x2 = batch.signs[i], batch.signs[j]
    if method == "arcsine":
        raise ValueError("the arcsine law only yields correlations; use recover_matrix")
    if method in ("time_varying", "time_varying_joint"):
        if batch.thresholds is None:
            raise ValueError("time-varying recovery needs recorded thresholds")
        v1, v2, counts = group_pairs(x1, x2, batch.thresholds[i], batch.thresholds[j])
        dvar = (0.0, 0.0)
    else:
        nominal = sched.nominal()
        if not (np.all(nominal[i] == nominal[i, 0]) and np.all(nominal[j] == nominal[j, 0])):
            raise ValueError(f"{method} needs a constant nominal threshold")
        v1, v2 = nominal[i, :1], nominal[j, :1]
        _, _, counts = group_pairs(x1, x2, np.zeros_like(x1, float), np.zeros_like(x2, float))
        if method == "dither":
            if sched.kind != "gaussian_dither":
                raise ValueError("dither recovery needs a gaussian_dither schedule")
            var = sched.dither_variance()
            dvar = (var[i], var[j])
        else:
            dvar = (0.0, 0.0)
    theta, flags = fit_counts(method, v1, v2, counts[None], dvar, order)
    if not np.all(np.isfinite(theta[0])):
        if method.startswith("time_varying"):
            raise ConvergenceError(f"{method} fit failed for channels {channels}", theta[0])
        raise UnidentifiableError(f"{method} fit failed for channels {channels}")
    est = PairEstimate(PairParams(*map(float, theta[0])), method)
    for key, val in flags.items():
        est.flags[key] = np.asarray(val)[0].tolist()
    if "iterations" in flags:
        it = np.asarray(flags["iterations"])[0]
        est.iterations = {"sigma1": int(it[0]), "sigma2": int(it[1]), "sigma12": int(it[2])}
        est.converged = {"separate": True}
    if method == "time_varying_joint":
        est.iterations["joint"] = int(flags["joint_iterations"][0])
        est.converged["joint"] = bool(flags["joint_converged"][0])
    return est


def joint_mle(batch: OneBitBatch, init: PairParams = None, channels=(0, 1)) -> PairEstimate:
    """Joint maximum-likelihood refinement of a pair.

    Without ``init`` the two Newton stages provide the starting point.
    """
    from .mle import joint_ascent

    if init is None:
        return estimate_pair(batch, "time_varying_joint", channels)
    i, j = channels
    v1, v2, counts = group_pairs(batch.signs[i], batch.signs[j],
                                 batch.thresholds[i], batch.thresholds[j])
    th, it, conv, fail, g0 = joint_ascent(v1, v2, counts[None], init.theta[None])
    est = PairEstimate(PairParams(*map(float, th[0])), "time_varying_joint")
    est.iterations = {"joint": int(it[0])}
    est.converged = {"joint": bool(conv[0])}
    est.flags = {"line_search_failed": bool(fail[0]), "initial_grad": g0[0].tolist()}
    return est
