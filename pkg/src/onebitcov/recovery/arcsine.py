"""Zero-threshold (arcsine law) correlation estimators."""

import numpy as np

from ..quantizer import OneBitBatch


def _require_zero(batch: OneBitBatch):
    if batch.schedule.kind != "zero":
        raise ValueError("arcsine estimators need a zero-threshold batch")


def sign_covariance(x):
    """Sample covariance ``(1/N) sum_t x(t) x(t)^H`` of a sign record ``(M, N)``."""
    x = np.asarray(x)
    xf = x.astype(complex if np.iscomplexobj(x) else float)
    return xf @ xf.conj().T / x.shape[1]


def arcsine_real(batch: OneBitBatch) -> np.ndarray:
    """Correlation-matrix estimate ``sin(pi/2 * Sigma_x)``."""
    _require_zero(batch)
    out = np.sin(0.5 * np.pi * sign_covariance(batch.signs))
    return 0.5 * (out + out.T)


def arcsine_complex(batch: OneBitBatch) -> np.ndarray:
    """Complex correlation estimate from ``x = sign(Re y) + i sign(Im y)``."""
    _require_zero(batch)
    if not batch.is_complex:
        raise ValueError("arcsine_complex needs a complex batch")
    sx = sign_covariance(batch.signs + 1j * batch.imag_signs)
    out = np.sin(0.25 * np.pi * sx.real) + 1j * np.sin(0.25 * np.pi * sx.imag)
    return 0.5 * (out + out.conj().T)
