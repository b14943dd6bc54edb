"""
Choosing a constant threshold
=============================

With one fixed threshold v the scale estimate is sigma = v / Q^-1(p). Its
variance blows up when v is tiny (every bit is a coin flip) or huge (the
bits saturate). This walks through the trade-off.
"""

# %%
import numpy as np
from scipy import optimize
from scipy.stats import norm

from onebitcov.quantizer import PairParams
from onebitcov.recovery import sigma_from_prob
from onebitcov.theory import taylor_var_sigma, threshold_sweep

sigma, n = 0.6, 1000
for v in (0.2, 0.6, 0.96, 1.5, 2.5):
    print(f"v/sigma = {v / sigma:4.2f}   predicted var {taylor_var_sigma(sigma, v, n):.3e}")

# %%
# The predicted optimum sits a little above 1.5 sigma, whatever sigma is.
for s in (0.25, 0.6, 2.0):
    best = optimize.minimize_scalar(lambda v: taylor_var_sigma(s, v, n), bounds=(0.05 * s, 5 * s),
                                    method="bounded").x
    print(f"sigma = {s}: best v = {best:.3f} = {best / s:.3f} sigma")

# %%
# Quick Monte Carlo check at the optimum: binomial counts are all we need.
rng = np.random.default_rng(0)
v = 1.58 * sigma
k = rng.binomial(n, norm.sf(v / sigma), 20000)
est = sigma_from_prob(k / n, v)
print("empirical var", np.nanvar(est), "predicted", taylor_var_sigma(sigma, v, n))

# %%
# For a pair, one shared threshold has to serve both channels.
grid, mse = threshold_sweep(PairParams(0.25, 0.6, -0.08), n)
for j, name in enumerate(("sigma1", "sigma2", "sigma12")):
    print(f"{name:8s} best shared v = {grid[np.nanargmin(mse[:, j])]:.2f}")
