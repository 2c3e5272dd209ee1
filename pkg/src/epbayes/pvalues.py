"""Two-sample p-values: empirical partially Bayes tests and classical baselines.

Every test is two-sided and works with precision-weighted summaries, where
the effective sample sizes ``n_eff_a``/``n_eff_b`` take the place of the
replicate counts while the degrees of freedom stay ``K - 1``.

The scalar functions mirror the per-feature formulas; :func:`pvalue_arrays`
evaluates the same formulas over a whole :class:`~epbayes.summary.FeatureTable`
and is what :func:`run_all` and the simulation harness use.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np

from .distributions import (
    Tolerance,
    _chi2_scaled_logpdf,
    _f_scaled_logpdf,
    _t_cdf,
    gauss_legendre,
    log_gamma,
    normal_cdf,
)
from .errors import ConfigurationError, DomainError, NumericError
from .mtp import benjamini_hochberg
from .npmle import DiscretePrior1D, DiscretePrior2D
from .summary import FeatureSummary, FeatureTable

__all__ = [
    "MethodId",
    "TestRow",
    "pvr_fixed_lambda",
    "pvr_prior",
    "pdv_fixed",
    "pdv_prior",
    "p_ev",
    "p_welch",
    "p_bf",
    "pvalue_arrays",
    "run_all",
    "BF_TOL",
]

# smallest reported p-value; tails beyond this underflow in double precision
P_FLOOR = np.finfo(float).tiny
# posterior log-weights this far below the row maximum are dropped
LOG_UNDERFLOW = -745.0
# max_iter: refinement rounds (512/1024, then 2048/4096, then 8192/16384 nodes)
BF_TOL = Tolerance(abs_tol=1e-10, rel_tol=1e-10, max_iter=3)
BF_NODES = 512
CHUNK = 1024


class MethodId(enum.Enum):
    VREPB = "vrepb"
    DVEPB = "dvepb"
    EV = "ev"
    WELCH = "welch"
    BF = "bf"
    POOLED_FIXED_LAMBDA = "pooled"

    @classmethod
    def parse(cls, name: str) -> "MethodId":
        key = name.strip().lower().replace("-", "_")
        aliases = {"b_f": "bf", "pooled_fixed_lambda": "pooled", "pool": "pooled"}
        key = aliases.get(key, key)
        for m in cls:
            if m.value == key or m.name.lower() == key:
                return m
        raise ConfigurationError(f"unknown method {name!r}; choose from {[m.value for m in cls]}")


@dataclass
class TestRow:
    feature_id: str
    t_bf: float
    lambda_hat: float
    p: Dict[MethodId, Optional[float]] = field(default_factory=dict)
    q: Dict[MethodId, Optional[float]] = field(default_factory=dict)
    degenerate: bool = False

    __test__ = False  # keep pytest from collecting this class


def _floor(p):
    return np.clip(p, P_FLOOR, 1.0)


def _check_pos(**kw):
    for k, v in kw.items():
        a = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise DomainError(f"{k} must be finite and positive")


# ------------------------------------------------------------------ VR


def _vr_tail(t, l, lam, nu_a, nu_b, n_a, n_b):
    # two-sided pooled-t tail when the variance ratio is lam, written in terms
    # of (t_bf, lambda_hat) only
    nu = nu_a + nu_b
    z = np.abs(t) * np.sqrt(nu * (l / n_a + 1.0 / n_b))
    m = nu_a / n_a + nu_a / (n_b * lam)
    nn = nu_b / n_b + nu_b * lam / n_a
    return _floor(2.0 * _t_cdf(-z / np.sqrt(l * m + nn), nu))


def pvr_fixed_lambda(t_bf, lambda_hat, lam, k_a, k_b, n_a=None, n_b=None) -> float:
    """Pooled-t p-value at a known variance ratio ``lam``.

    Parameters
    ----------
    t_bf : float
        Behrens-Fisher statistic.
    lambda_hat : float
        Sample variance ratio ``var_a / var_b``.
    lam : float
        Assumed true variance ratio.
    k_a, k_b : int
        Replicate counts (degrees of freedom are ``k - 1``).
    n_a, n_b : float, optional
        Effective sample sizes for weighted data; default to ``k_a``, ``k_b``.
    """
    n_a = k_a if n_a is None else n_a
    n_b = k_b if n_b is None else n_b
    _check_pos(lambda_hat=lambda_hat, lam=lam, n_a=n_a, n_b=n_b, nu_a=k_a - 1, nu_b=k_b - 1)
    if not math.isfinite(t_bf):
        raise DomainError("t_bf must be finite")
    return float(_vr_tail(float(t_bf), float(lambda_hat), float(lam), k_a - 1.0, k_b - 1.0, float(n_a), float(n_b)))


def _posterior(logw):
    # rows of log-weights -> normalized posterior, underflow-safe
    if np.any(np.isnan(logw)):
        raise NumericError("posterior log-weights contain NaN")
    mx = logw.max(axis=1, keepdims=True)
    bad = ~np.isfinite(mx[:, 0])
    if np.any(bad):
        raise NumericError(f"posterior weights underflow to zero for row {int(np.flatnonzero(bad)[0])}")
    r = logw - mx
    post = np.where(r < LOG_UNDERFLOW, 0.0, np.exp(r))
    return post / post.sum(axis=1, keepdims=True)


def _vr_prior_arrays(t, l, prior: DiscretePrior1D, nu_a, nu_b, n_a, n_b):
    u, w = prior.atoms()
    col = lambda a: np.asarray(a, dtype=float).reshape(-1, 1)
    t, l, nu_a, nu_b, n_a, n_b = map(col, (t, l, nu_a, nu_b, n_a, n_b))
    logpost = np.log(w)[None, :] + _f_scaled_logpdf(l, u[None, :], nu_a, nu_b)
    post = _posterior(logpost)
    tails = _vr_tail(t, l, u[None, :], nu_a, nu_b, n_a, n_b)
    return _floor(np.sum(post * tails, axis=1))


def pvr_prior(t_bf, lambda_hat, prior: DiscretePrior1D, k_a, k_b, n_a=None, n_b=None, feature_id="") -> float:
    """Variance-ratio empirical partially Bayes p-value.

    Averages :func:`pvr_fixed_lambda` over the posterior of the variance
    ratio given ``lambda_hat``, with prior ``prior`` and the scaled-F
    likelihood.
    """
    n_a = k_a if n_a is None else n_a
    n_b = k_b if n_b is None else n_b
    _check_pos(lambda_hat=lambda_hat, n_a=n_a, n_b=n_b, nu_a=k_a - 1, nu_b=k_b - 1)
    try:
        return float(_vr_prior_arrays(t_bf, lambda_hat, prior, k_a - 1, k_b - 1, n_a, n_b)[0])
    except NumericError as e:
        raise NumericError(f"feature {feature_id!r}: {e}") from None


# ------------------------------------------------------------------ DV


def _dv_tail(t, s2a, s2b, sig2a, sig2b, n_a, n_b):
    ratio = (s2a / n_a + s2b / n_b) / (sig2a / n_a + sig2b / n_b)
    return _floor(2.0 * normal_cdf(-np.abs(t) * np.sqrt(ratio)))


def pdv_fixed(t_bf, s2a, s2b, sig2a, sig2b, n_a, n_b) -> float:
    """Normal tail of ``t_bf`` when both true variances are known."""
    _check_pos(s2a=s2a, s2b=s2b, sig2a=sig2a, sig2b=sig2b, n_a=n_a, n_b=n_b)
    if not math.isfinite(t_bf):
        raise DomainError("t_bf must be finite")
    return float(_dv_tail(np.float64(t_bf), s2a, s2b, sig2a, sig2b, n_a, n_b))


def _dv_prior_arrays(t, s2a, s2b, prior: DiscretePrior2D, n_a, n_b, nu_a, nu_b):
    ua, ub, w = prior.atoms()
    col = lambda a: np.asarray(a, dtype=float).reshape(-1, 1)
    t, s2a, s2b, n_a, n_b, nu_a, nu_b = map(col, (t, s2a, s2b, n_a, n_b, nu_a, nu_b))
    logpost = (
        np.log(w)[None, :]
        + _chi2_scaled_logpdf(s2a, ua[None, :], nu_a)
        + _chi2_scaled_logpdf(s2b, ub[None, :], nu_b)
    )
    post = _posterior(logpost)
    tails = _dv_tail(t, s2a, s2b, ua[None, :], ub[None, :], n_a, n_b)
    return _floor(np.sum(post * tails, axis=1))


def pdv_prior(t_bf, s2a, s2b, prior: DiscretePrior2D, n_a, n_b, nu_a, nu_b, feature_id="") -> float:
    """Dual-variance empirical partially Bayes p-value.

    Averages :func:`pdv_fixed` over the posterior of the variance pair under
    ``prior`` with independent scaled chi-square likelihoods.
    """
    _check_pos(s2a=s2a, s2b=s2b, n_a=n_a, n_b=n_b, nu_a=nu_a, nu_b=nu_b)
    try:
        return float(_dv_prior_arrays(t_bf, s2a, s2b, prior, n_a, n_b, nu_a, nu_b)[0])
    except NumericError as e:
        raise NumericError(f"feature {feature_id!r}: {e}") from None


# ------------------------------------------------------------------ baselines


def _ev_arrays(mean_a, var_a, n_a, mean_b, var_b, n_b, nu_a, nu_b):
    nu = nu_a + nu_b
    pooled = (nu_a * var_a + nu_b * var_b) / nu
    stat = (mean_a - mean_b) / (np.sqrt(pooled) * np.sqrt(1.0 / n_a + 1.0 / n_b))
    return _floor(2.0 * _t_cdf(-np.abs(stat), nu))


def welch_df(var_a, n_a, nu_a, var_b, n_b, nu_b):
    a = var_a / n_a
    b = var_b / n_b
    return (a + b) ** 2 / (a * a / nu_a + b * b / nu_b)


def _welch_arrays(mean_a, var_a, n_a, mean_b, var_b, n_b, nu_a, nu_b):
    t = (mean_a - mean_b) / np.sqrt(var_a / n_a + var_b / n_b)
    df = welch_df(var_a, n_a, nu_a, var_b, n_b, nu_b)
    return _floor(2.0 * _t_cdf(-np.abs(t), df))


def _bf_quadrature(tau, c_a, c_b, nu_a, nu_b, nodes):
    """One-sided fiducial tail P(c_a U - c_b V >= tau), U ~ t(nu_a), V ~ t(nu_b).

    The outer integral runs over whichever of U, V has the smaller
    coefficient, so the inner t CDF varies at most at unit rate. Writing the
    outer variable as sqrt(nu) tan(theta) turns its density into
    ``c_nu cos(theta)^(nu - 1)`` on (-pi/2, pi/2): a bounded integrand on a
    finite interval.

    The inner CDF crosses 1/2 at v* = -tau / c_outer and changes over a
    width of about s = c_inner / c_outer; both can put the action very close
    to an end of the theta interval. The interval is therefore cut at the
    images of v* - 8s, v* - s, v*, v* + s, v* + 8s, v*/2 and 0, and the
    ``nodes`` Gauss-Legendre points are shared equally between the eight
    pieces.
    """
    swap = c_a < c_b
    c_o = np.where(swap, c_a, c_b)[:, None]
    c_i = np.where(swap, c_b, c_a)[:, None]
    nu_o = np.where(swap, nu_a, nu_b)[:, None]
    nu_i = np.where(swap, nu_b, nu_a)[:, None]
    tau = tau[:, None]
    x, wx = gauss_legendre(nodes // 8)
    half = 0.5 * math.pi
    v_star = -tau / c_o
    width = c_i / c_o
    inner_cuts = np.hstack(
        [v_star - 8 * width, v_star - width, v_star, v_star + width, v_star + 8 * width, 0.5 * v_star, 0.0 * tau]
    )
    inner_cuts = np.sort(np.arctan(inner_cuts / np.sqrt(nu_o)), axis=1)
    cuts = [np.full_like(tau, -half)] + [inner_cuts[:, j : j + 1] for j in range(7)] + [np.full_like(tau, half)]
    log_c = log_gamma(0.5 * (nu_o + 1.0)) - log_gamma(0.5 * nu_o) - 0.5 * math.log(math.pi)
    total = np.zeros(tau.shape[0])
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (hi + lo)
        rad = 0.5 * (hi - lo)
        theta = mid + rad * x[None, :]
        dens = np.exp(log_c + (nu_o - 1.0) * np.log(np.cos(theta)))
        v = np.sqrt(nu_o) * np.tan(theta)
        inner = _t_cdf(-(tau + c_o * v) / c_i, np.broadcast_to(nu_i, v.shape))
        total += np.sum(rad * wx[None, :] * dens * inner, axis=1)
    return total


def _bf_arrays(mean_a, var_a, n_a, mean_b, var_b, n_b, nu_a, nu_b, tol: Tolerance = BF_TOL):
    a = var_a / n_a
    b = var_b / n_b
    tau = np.abs(mean_a - mean_b) / np.sqrt(a + b)
    c_a = np.sqrt(a / (a + b))
    c_b = np.sqrt(b / (a + b))
    args = [np.broadcast_to(np.asarray(v, float), tau.shape) for v in (c_a, c_b, nu_a, nu_b)]
    out = np.empty(tau.shape)
    for lo in range(0, tau.size, CHUNK):
        rows = np.arange(lo, min(lo + CHUNK, tau.size))
        nodes = BF_NODES
        # compare N and 2N nodes; rows that disagree are retried with 4x the nodes
        for _ in range(tol.max_iter):
            sub = [arg[rows] for arg in args]
            p1 = 2.0 * _bf_quadrature(tau[rows], *sub, nodes)
            p2 = 2.0 * _bf_quadrature(tau[rows], *sub, 2 * nodes)
            err = np.abs(p1 - p2)
            good = err <= tol.abs_tol
            out[rows[good]] = p2[good]
            rows = rows[~good]
            if rows.size == 0:
                break
            nodes *= 4
        if rows.size:
            raise NumericError(
                f"Behrens-Fisher quadrature did not reach {tol.abs_tol:g} at {2 * nodes // 4} nodes "
                f"(row {int(rows[np.argmax(err[~good])])}, discrepancy {err.max():.3g})"
            )
    out[tau == 0] = 1.0
    return _floor(out)


def _summary_args(s: FeatureSummary):
    if s.degenerate:
        raise DomainError(f"feature {s.feature_id!r} has a zero variance")
    return (
        np.array([s.mean_a]), np.array([s.var_a]), np.array([s.n_eff_a]),
        np.array([s.mean_b]), np.array([s.var_b]), np.array([s.n_eff_b]),
        np.array([float(s.nu_a)]), np.array([float(s.nu_b)]),
    )


def p_ev(s: FeatureSummary) -> float:
    """Equal-variance (pooled) t-test."""
    return float(_ev_arrays(*_summary_args(s))[0])


def p_welch(s: FeatureSummary) -> float:
    """Welch test with Satterthwaite degrees of freedom."""
    return float(_welch_arrays(*_summary_args(s))[0])


def p_bf(s: FeatureSummary, tol: Tolerance = BF_TOL) -> float:
    """Fiducial Behrens-Fisher test, ``2 P(sin(R) U - cos(R) V >= |t_bf|)``.

    ``tan(R)^2`` is the ratio of the two squared standard errors and U, V are
    independent t variables on ``nu_a`` and ``nu_b`` degrees of freedom. The
    integral is evaluated by quadrature to absolute error ``tol.abs_tol``.
    """
    return float(_bf_arrays(*_summary_args(s), tol=tol)[0])


# ------------------------------------------------------------------ driver


def _table_pvalues(tab: FeatureTable, idx, methods, vr_prior, dv_prior, lam, bf_tol):
    args = (
        tab.mean_a[idx], tab.var_a[idx], tab.n_eff_a[idx],
        tab.mean_b[idx], tab.var_b[idx], tab.n_eff_b[idx],
        tab.nu_a[idx].astype(float), tab.nu_b[idx].astype(float),
    )
    ma, va, na, mb, vb, nb, nua, nub = args
    t = (ma - mb) / np.sqrt(va / na + vb / nb)
    l = va / vb
    out = {}
    for m in methods:
        if m is MethodId.EV:
            out[m] = _ev_arrays(*args)
        elif m is MethodId.WELCH:
            out[m] = _welch_arrays(*args)
        elif m is MethodId.BF:
            out[m] = _bf_arrays(*args, tol=bf_tol)
        elif m is MethodId.POOLED_FIXED_LAMBDA:
            out[m] = _vr_tail(t, l, lam, nua, nub, na, nb)
        elif m is MethodId.VREPB:
            out[m] = _vr_prior_arrays(t, l, vr_prior, nua, nub, na, nb)
        elif m is MethodId.DVEPB:
            out[m] = _dv_prior_arrays(t, va, vb, dv_prior, na, nb, nua, nub)
    return out


def _check_config(methods, vr_prior, dv_prior, lam):
    if MethodId.VREPB in methods and vr_prior is None:
        raise ConfigurationError("VREPB requested but no variance-ratio prior was supplied")
    if MethodId.DVEPB in methods and dv_prior is None:
        raise ConfigurationError("DVEPB requested but no dual-variance prior was supplied")
    if MethodId.POOLED_FIXED_LAMBDA in methods and not (lam > 0 and math.isfinite(lam)):
        raise DomainError(f"fixed variance ratio must be positive, got {lam}")


def pvalue_arrays(
    features,
    methods: Iterable[MethodId],
    vr_prior: Optional[DiscretePrior1D] = None,
    dv_prior: Optional[DiscretePrior2D] = None,
    lam: float = 1.0,
    bf_tol: Tolerance = BF_TOL,
    threads: int = 1,
) -> Dict[MethodId, np.ndarray]:
    """P-value vectors per method; degenerate features hold ``nan``.

    Features are processed in fixed contiguous chunks; with ``threads > 1``
    the chunks run concurrently and are reassembled in order, so the result
    does not depend on the thread count.
    """
    tab = FeatureTable.from_summaries(features)
    methods = list(dict.fromkeys(methods))
    _check_config(methods, vr_prior, dv_prior, lam)
    n = len(tab)
    ok = np.flatnonzero(~tab.degenerate)
    if any(m in (MethodId.VREPB, MethodId.DVEPB) for m in methods) and ok.size:
        if np.any(tab.nu_a[ok] < 2) or np.any(tab.nu_b[ok] < 2):
            raise DomainError("VREPB/DVEPB need at least 3 replicates per group")
    out = {m: np.full(n, np.nan) for m in methods}
    if not methods or ok.size == 0:
        return out
    chunks = [ok[i : i + CHUNK] for i in range(0, ok.size, CHUNK)]

    def work(idx):
        try:
            return _table_pvalues(tab, idx, methods, vr_prior, dv_prior, lam, bf_tol)
        except NumericError as e:
            raise NumericError(f"{e} (features starting at {tab.feature_id[idx[0]]!r})") from None

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    for idx, res in zip(chunks, results):
        for m in methods:
            out[m][idx] = res[m]
    return out


def q_values(p: np.ndarray, alpha: float = 0.1) -> np.ndarray:
    """BH q-values over the non-missing entries of ``p`` (missing stay ``nan``)."""
    q = np.full(p.shape, np.nan)
    ok = ~np.isnan(p)
    if ok.any():
        q[ok] = benjamini_hochberg(p[ok], alpha).q_values
    return q


def run_all(
    features,
    methods: Iterable[MethodId],
    vr_prior: Optional[DiscretePrior1D] = None,
    dv_prior: Optional[DiscretePrior2D] = None,
    lam: float = 1.0,
    bf_tol: Tolerance = BF_TOL,
    threads: int = 1,
):
    """Test every feature with every requested method and attach BH q-values.

    Returns one :class:`TestRow` per feature in input order. Degenerate
    features (a zero variance) get ``None`` for every p- and q-value.
    """
    tab = FeatureTable.from_summaries(features)
    methods = list(dict.fromkeys(methods))
    p = pvalue_arrays(tab, methods, vr_prior, dv_prior, lam, bf_tol, threads)
    q = {m: q_values(p[m]) for m in methods}
    lam_hat, t_bf, _ = tab.derived()
    deg = tab.degenerate
    rows = []
    none_or = lambda v: None if np.isnan(v) else float(v)
    for i in range(len(tab)):
        rows.append(
            TestRow(
                feature_id=tab.feature_id[i],
                t_bf=float(t_bf[i]),
                lambda_hat=float(lam_hat[i]),
                p={m: none_or(p[m][i]) for m in methods},
                q={m: none_or(q[m][i]) for m in methods},
                degenerate=bool(deg[i]),
            )
        )
    return rows
