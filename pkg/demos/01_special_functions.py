# # Special functions
#
# Every tail area in the package goes through a small set of special
# functions: the regularized incomplete beta, the Student t, F and normal
# CDFs, and the scaled-F / scaled-chi-square log densities used as
# likelihood kernels. This script compares them with scipy.

# %%

import numpy as np
from scipy import stats

from epbayes import distributions as D

# %% [markdown]
# The t CDF is the incomplete beta at nu / (nu + x^2). Far tails are computed
# from the small side directly, so there is no cancellation at x = -40.

# %%

x = np.array([-40.0, -5.0, -1.0, 0.0, 2.0, 8.0])
for nu in (2.0, 4.5, 30.0):
    print(f"nu={nu:5}", np.max(np.abs(D.t_cdf(x, nu) - stats.t.cdf(x, nu))))

print("t tail at -40 on 4 df:", D.t_cdf(-40.0, 4.0), stats.t.cdf(-40.0, 4.0))

# %% [markdown]
# F and normal CDFs.

# %%

xf = np.logspace(-3, 3, 7)
print("F(3, 12):", np.max(np.abs(D.f_cdf(xf, 3.0, 12.0) - stats.f.cdf(xf, 3, 12))))
print("normal:", np.max(np.abs(D.normal_cdf(x) - stats.norm.cdf(x))))

# %% [markdown]
# The variance-ratio kernel: lambda_hat = lambda * F(nu_a, nu_b) has log
# density log f_F(lambda_hat / lambda) - log lambda.

# %%

lhat, lam = 0.7, 2.0
print(D.f_scaled_logpdf(lhat, lam, 2.0, 8.0), stats.f.logpdf(lhat / lam, 2, 8) - np.log(lam))

# The sample variance kernel: s2 = sigma2 * chi2(nu) / nu.
s2, sig2, nu = 3.1, 2.0, 4.0
print(D.chi2_scaled_logpdf(s2, sig2, nu), stats.chi2.logpdf(nu * s2 / sig2, nu) + np.log(nu / sig2))
