"""Covariance estimators for one-bit data."""

from .arcsine import arcsine_complex, arcsine_real, sign_covariance
from .constant import const_rho, const_sigma, rho_from_probs, sigma_from_prob
from .matrix import CovarianceEstimate, psd_project, recover_complex, recover_matrix
from .mle import fit_time_varying, mle_sigma12_newton, mle_sigma_newton
from .pair import METHODS, PairEstimate, estimate_pair, fit_counts, joint_mle

__all__ = [
    "METHODS",
    "CovarianceEstimate",
    "PairEstimate",
    "arcsine_complex",
    "arcsine_real",
    "const_rho",
    "const_sigma",
    "estimate_pair",
    "fit_counts",
    "fit_time_varying",
    "joint_mle",
    "mle_sigma12_newton",
    "mle_sigma_newton",
    "psd_project",
    "recover_complex",
    "recover_matrix",
    "rho_from_probs",
    "sigma_from_prob",
    "sign_covariance",
]
