# # Partially Bayes p-values
#
# VREPB averages the pooled-t tail over the posterior of lambda given
# lambda_hat. DVEPB averages a normal tail over the posterior of both
# variances. We compare them with the equal-variance t-test, Welch and the
# Behrens-Fisher test on one small unbalanced design.

# %%

import numpy as np

from epbayes import MethodId, fit_dv_prior, fit_vr_prior, run_all, summarize_matrix

rng = np.random.default_rng(5)
n, k_a, k_b = 3000, 3, 6
sig2b = np.abs(6 + 2 * rng.standard_normal(n))
sig2a = 2.0 * rng.f(8, 12, n) * sig2b
mu_a = np.zeros(n)
alt = rng.random(n) < 0.1
mu_a[alt] = rng.normal(0, np.sqrt(12 * sig2a[alt]))
xa = mu_a[:, None] + np.sqrt(sig2a)[:, None] * rng.standard_normal((n, k_a))
xb = np.sqrt(sig2b)[:, None] * rng.standard_normal((n, k_b))
tab = summarize_matrix(xa, xb)

# %%

vr = fit_vr_prior(tab.var_a / tab.var_b, tab.nu_a, tab.nu_b)
dv = fit_dv_prior(tab.var_a, tab.var_b, tab.nu_a, tab.nu_b)
methods = [MethodId.EV, MethodId.WELCH, MethodId.BF, MethodId.VREPB, MethodId.DVEPB]
rows = run_all(list(tab), methods, vr_prior=vr.prior, dv_prior=dv.prior)

# %% [markdown]
# Discoveries at BH level 0.1 and how many are false.

# %%

for m in methods:
    rej = np.array([r.q[m] <= 0.1 for r in rows])
    false = int(np.sum(rej & ~alt))
    print(f"{m.value:6s} discoveries {rej.sum():4d}  false {false:4d}")

# %% [markdown]
# Null p-values should look uniform for the partially Bayes methods.

# %%

for m in (MethodId.EV, MethodId.VREPB, MethodId.DVEPB):
    p0 = np.array([r.p[m] for r, a in zip(rows, alt) if not a])
    print(m.value, "null fraction below 0.05:", round(float(np.mean(p0 <= 0.05)), 4))
