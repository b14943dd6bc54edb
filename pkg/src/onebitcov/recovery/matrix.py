"""Pairwise assembly of full covariance matrices, real and complex."""

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..errors import ConvergenceError, UnidentifiableError
from ..quantizer import OneBitBatch
from .arcsine import arcsine_complex, arcsine_real
from .constant import DEFAULT_ORDER, rho_from_probs, sigma_from_prob
from .likelihood import group_channel, group_pairs
from .mle import init_sigma, init_sigma12, joint_ascent, newton_sigma, newton_sigma12
from .pair import METHODS


@dataclass
class CovarianceEstimate:
    """An ``M x M`` estimate plus the flags raised while producing it."""

    matrix: np.ndarray
    method: str
    flags: dict = field(default_factory=dict)

    @property
    def n_channels(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self):
        m = self.matrix
        out = {"method": self.method, "n_channels": self.n_channels, "flags": self.flags}
        if np.iscomplexobj(m):
            out["real"] = m.real.tolist()
            out["imag"] = m.imag.tolist()
        else:
            out["matrix"] = m.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CovarianceEstimate":
        d = json.loads(text)
        if "matrix" in d:
            m = np.array(d["matrix"], float)
        else:
            m = np.array(d["real"], float) + 1j * np.array(d["imag"], float)
        return cls(m, d["method"], d.get("flags", {}))

    def to_csv(self) -> str:
        """Row-major CSV; the first line is a ``#`` header with M, method and flags."""
        buf = io.StringIO()
        buf.write(f"# M={self.n_channels} method={self.method} flags={json.dumps(self.flags)}\n")
        w = csv.writer(buf, lineterminator="\n")
        for row in self.matrix:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x):
    if np.iscomplexobj(x):
        return repr(complex(x)).strip("()")
    return repr(float(x))


def psd_project(mat):
    """Clip negative eigenvalues at zero; returns ``(matrix, was_changed)``."""
    herm = np.iscomplexobj(mat)
    w, vecs = np.linalg.eigh(mat)
    if np.all(w >= 0):
        return mat, False
    out = (vecs * np.clip(w, 0.0, None)) @ vecs.conj().T
    out = 0.5 * (out + out.conj().T)
    return (out if herm else out.real), True


def _channel_stage(batch, method, order):
    """Per-channel standard deviations (raw, before any dither correction)."""
    m = batch.n_channels
    sig = np.empty(m)
    flags = {}
    if method.startswith("time_varying"):
        if batch.thresholds is None:
            raise ValueError("time-varying recovery needs recorded thresholds")
        iters = []
        for i in range(m):
            v = batch.thresholds[i]
            if np.all(v == 0):
                raise UnidentifiableError(f"channel {i}: all thresholds are zero", channel=i)
            vg, counts = group_channel(batch.signs[i], v)
            x0 = init_sigma(vg, counts[None])
            if not np.isfinite(x0[0]):
                raise UnidentifiableError(f"channel {i}: every threshold level saturated", channel=i)
            s, it, conv = newton_sigma(vg, counts[None], x0)
            if not conv[0]:
                raise ConvergenceError(f"channel {i}: Newton did not converge", s[0])
            sig[i] = s[0]
            iters.append(int(it[0]))
        flags["channel_iterations"] = iters
        return sig, flags
    nominal = batch.schedule.nominal()
    for i in range(m):
        v = nominal[i, 0]
        if not np.all(nominal[i] == v):
            raise ValueError(f"{method} needs a constant nominal threshold on channel {i}")
        p = float(np.mean(batch.signs[i] > 0))
        s = sigma_from_prob(p, v)
        if not np.isfinite(s):
            raise UnidentifiableError(
                f"channel {i}: sign rate {p:.6g} does not identify the scale at v={v}", channel=i
            )
        sig[i] = s
    return sig, flags


def _pairs_time_varying(batch, sig, joint):
    m = batch.n_channels
    out = np.zeros((m, m))
    # pairs sharing the same threshold groups are fitted in one batch
    buckets = {}
    for i, j in combinations(range(m), 2):
        v1, v2, counts = group_pairs(batch.signs[i], batch.signs[j],
                                     batch.thresholds[i], batch.thresholds[j])
        key = (v1.tobytes(), v2.tobytes())
        buckets.setdefault(key, (v1, v2, [], []))
        buckets[key][2].append((i, j))
        buckets[key][3].append(counts)
    n_bis = 0
    joint_iters = {}
    for v1, v2, idx, cl in buckets.values():
        counts = np.stack(cl)
        ii, jj = np.array(idx).T
        s1, s2 = sig[ii], sig[jj]
        x0 = init_sigma12(v1, v2, counts, s1, s2)
        s12, _, conv, bis = newton_sigma12(v1, v2, counts, s1, s2, x0)
        if not conv.all():
            k = int(np.flatnonzero(~conv)[0])
            raise ConvergenceError(f"channels {idx[k]}: covariance iteration did not converge", s12[k])
        n_bis += int(bis.sum())
        if joint:
            th0 = np.stack([s1, s2, s12], axis=-1)
            th, it, _, _, _ = joint_ascent(v1, v2, counts, th0)
            s12 = th[:, 2]
            for k, p in enumerate(idx):
                joint_iters[f"{p[0]},{p[1]}"] = int(it[k])
        out[ii, jj] = s12
        out[jj, ii] = s12
    flags = {"bisection_pairs": n_bis}
    if joint:
        flags["joint_iterations"] = joint_iters
    return out, flags


def _pairs_constant(batch, sig, order):
    m = batch.n_channels
    nominal = batch.schedule.nominal()[:, 0]
    pos = batch.signs > 0
    p = pos.mean(axis=1)
    out = np.zeros((m, m))
    n_fb = 0
    for i, j in combinations(range(m), 2):
        p12 = float(np.mean(pos[i] & pos[j]))
        rho, fb = rho_from_probs(p[i], p[j], p12, nominal[i] / sig[i], nominal[j] / sig[j], order)
        n_fb += fb
        out[i, j] = out[j, i] = rho * sig[i] * sig[j]
    return out, {"bisection_pairs": n_fb}


def recover_matrix(batch: OneBitBatch, method="time_varying", psd=False, order=DEFAULT_ORDER):
    """Estimate the ``M x M`` covariance of a real one-bit batch.

    Diagonal entries come from per-channel fits and off-diagonals from the
    pairwise covariance stage. ``arcsine`` returns a correlation matrix.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if batch.n_channels < 2:
        raise ValueError("need at least two channels")
    flags = {}
    if method == "arcsine":
        mat = arcsine_real(batch)
    else:
        if method == "dither" and batch.schedule.kind != "gaussian_dither":
            raise ValueError("dither recovery needs a gaussian_dither schedule")
        sig, f1 = _channel_stage(batch, method, order)
        flags.update(f1)
        if method.startswith("time_varying"):
            mat, f2 = _pairs_time_varying(batch, sig, method.endswith("joint"))
        else:
            mat, f2 = _pairs_constant(batch, sig, order)
        flags.update(f2)
        var = sig**2
        if method == "dither":
            var = var - batch.schedule.dither_variance()
            bad = np.flatnonzero(~(var > 0))
            if bad.size:
                i = int(bad[0])
                raise UnidentifiableError(
                    f"channel {i}: shifted variance below the dither variance", channel=i
                )
        mat[np.diag_indices_from(mat)] = var
    mat = 0.5 * (mat + mat.T)
    flags["psd_projected"] = False
    if psd:
        mat, flags["psd_projected"] = psd_project(mat)
    return CovarianceEstimate(mat, method, flags)


def combine_widely_linear(big):
    """Map the ``2M x 2M`` covariance of ``[Re y; Im y]`` to the complex ``M x M``."""
    m = big.shape[0] // 2
    ww, zz = big[:m, :m], big[m:, m:]
    zw, wz = big[m:, :m], big[:m, m:]
    return ww + zz + 1j * (zw - wz)


def recover_complex(batch: OneBitBatch, method="time_varying", psd=False, order=DEFAULT_ORDER):
    """Estimate the complex covariance ``E[y y^H]`` of a complex one-bit batch."""
    if not batch.is_complex:
        raise ValueError("recover_complex needs a complex batch")
    if method == "arcsine":
        mat = arcsine_complex(batch)
        flags = {}
    else:
        est = recover_matrix(batch.widely_linear(), method, psd=False, order=order)
        mat = combine_widely_linear(est.matrix)
        flags = dict(est.flags)
    herm = 0.5 * (mat + mat.conj().T)
    flags["hermitian_averaged"] = bool(np.max(np.abs(herm - mat), initial=0.0) > 0)
    flags["psd_projected"] = False
    if psd:
        herm, flags["psd_projected"] = psd_project(herm)
        herm[np.diag_indices_from(herm)] = np.clip(herm.diagonal().real, 0.0, None)
    return CovarianceEstimate(herm, method, flags)
