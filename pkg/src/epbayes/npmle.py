"""Discrete nonparametric maximum likelihood (Kiefer-Wolfowitz) priors.

The mixing distribution is restricted to a fixed grid, which turns the
problem into maximizing a concave function over the probability simplex:

    maximize  sum_i log( sum_k w_k exp(L_ik) )   subject to  w >= 0, sum(w) = 1.

Optimality is certified by the gradient condition: with f_i the fitted
mixture density, ``d_k = (1/n) sum_i exp(L_ik) / f_i`` satisfies
``max_k d_k <= 1`` at the optimum. The excess ``max_k d_k - 1`` is the
certificate gap, and by concavity no other simplex vector can improve the
log-likelihood by more than ``n * gap``.

The solver is a constrained Newton method with support updates: grid points
where the gradient exceeds one are added to the working support, a
nonnegative least-squares problem gives a Newton-type target, and a
backtracking line search keeps the objective monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import nnls

from .distributions import Tolerance, _chi2_scaled_logpdf, _f_scaled_logpdf
from .errors import DataError, DomainError, ShapeError

__all__ = [
    "DiscretePrior1D",
    "DiscretePrior2D",
    "NpmleFit",
    "SeparableLogLik",
    "NPMLE_TOL",
    "build_grid_1d",
    "build_grid_2d",
    "fit_npmle",
    "fit_vr_prior",
    "fit_dv_prior",
    "vr_loglik_matrix",
    "dv_loglik_factors",
]

# certificate gap, relative stall threshold, iteration budget
NPMLE_TOL = Tolerance(abs_tol=1e-5, rel_tol=1e-10, max_iter=20000)
TRUNCATE_BELOW = 1e-12
STALL_WINDOW = 10
NNLS_TARGET = 2.0
SIMPLEX_ROW_WEIGHT = 1e2


def _check_simplex(w):
    if w.size == 0:
        raise ShapeError("prior needs at least one support point")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("prior weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-10:
        raise DomainError(f"prior weights must sum to 1 (sum = {w.sum():.17g})")


@dataclass(frozen=True)
class DiscretePrior1D:
    """Weights on an increasing grid of positive support points."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.support, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if u.shape != w.shape:
            raise ShapeError("support and weights must have the same length")
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise DomainError("support points must be finite and positive")
        if np.any(np.diff(u) <= 0):
            raise DomainError("support must be strictly increasing")
        _check_simplex(w)
        object.__setattr__(self, "support", u)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, value: float) -> "DiscretePrior1D":
        return cls(np.array([float(value)]), np.array([1.0]))

    def atoms(self):
        """Support points carrying positive mass, with their weights."""
        keep = self.weights > 0
        return self.support[keep], self.weights[keep]

    def mean(self) -> float:
        return float(np.dot(self.support, self.weights))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.minimum(cw[np.searchsorted(self.support, x, side="right")], 1.0)


@dataclass(frozen=True)
class DiscretePrior2D:
    """Weights on a product grid ``support_a x support_b``.

    Only the nonzero weights are stored: ``indices`` are positions in the
    row-major flattening of the ``B1 x B2`` weight matrix.
    """

    support_a: np.ndarray
    support_b: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ua = np.asarray(self.support_a, dtype=float).ravel()
        ub = np.asarray(self.support_b, dtype=float).ravel()
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=float).ravel()
        for u in (ua, ub):
            if u.size == 0 or not np.all(np.isfinite(u)) or np.any(u <= 0):
                raise DomainError("support points must be finite and positive")
            if np.any(np.diff(u) <= 0):
                raise DomainError("support must be strictly increasing")
        if idx.shape != val.shape:
            raise ShapeError("indices and values must have the same length")
        if np.any(idx < 0) or np.any(idx >= ua.size * ub.size):
            raise ShapeError("weight index out of range for the grid")
        if np.unique(idx).size != idx.size:
            raise ShapeError("duplicate weight indices")
        _check_simplex(val)
        order = np.argsort(idx)
        object.__setattr__(self, "support_a", ua)
        object.__setattr__(self, "support_b", ub)
        object.__setattr__(self, "indices", idx[order])
        object.__setattr__(self, "values", val[order])

    @classmethod
    def from_dense(cls, support_a, support_b, weights) -> "DiscretePrior2D":
        w = np.asarray(weights, dtype=float)
        ua = np.asarray(support_a, dtype=float).ravel()
        ub = np.asarray(support_b, dtype=float).ravel()
        if w.shape != (ua.size, ub.size):
            raise ShapeError(f"weights shape {w.shape} does not match grid ({ua.size}, {ub.size})")
        flat = w.ravel()
        idx = np.flatnonzero(flat > 0)
        return cls(ua, ub, idx, flat[idx])

    @classmethod
    def point_mass(cls, sig2a: float, sig2b: float) -> "DiscretePrior2D":
        return cls(np.array([float(sig2a)]), np.array([float(sig2b)]), np.array([0]), np.array([1.0]))

    @property
    def shape(self):
        return self.support_a.size, self.support_b.size

    def dense_weights(self) -> np.ndarray:
        w = np.zeros(self.support_a.size * self.support_b.size)
        w[self.indices] = self.values
        return w.reshape(self.shape)

    def atoms(self):
        """``(sigma2_a, sigma2_b, weight)`` arrays for the positive-mass points."""
        ia, ib = np.divmod(self.indices, self.support_b.size)
        keep = self.values > 0
        return self.support_a[ia[keep]], self.support_b[ib[keep]], self.values[keep]


@dataclass
class NpmleFit:
    prior: Union[DiscretePrior1D, DiscretePrior2D]
    loglik: float
    certificate_gap: float
    iterations: int
    converged: bool
    loglik_trace: list = field(default_factory=list)


# ---------------------------------------------------------------- grids


def _positive_finite(x, name):
    x = np.asarray(x, dtype=float).ravel()
    x = x[np.isfinite(x) & (x > 0)]
    if x.size == 0:
        raise ShapeError(f"{name}: no finite positive values to build a grid from")
    return x


def _log_grid(lo, hi, b):
    if int(b) != b or b < 1:
        raise DomainError(f"grid size must be a positive integer, got {b}")
    if lo == hi or b == 1:
        return np.array([lo]) if lo == hi else np.array([math.sqrt(lo * hi)])
    g = np.exp(np.linspace(math.log(lo), math.log(hi), int(b)))
    g[0], g[-1] = lo, hi
    return g


def build_grid_1d(lambda_hats, b: int = 1000) -> np.ndarray:
    """``b`` log-spaced points from min to max of the finite positive inputs."""
    x = _positive_finite(lambda_hats, "lambda_hats")
    return _log_grid(float(x.min()), float(x.max()), b)


def grid_quantile(x, q: float = 0.01) -> float:
    """Empirical quantile by linear interpolation between order statistics.

    With sorted values x_(1..n) this is x_(h) interpolated at
    ``h = 1 + (n - 1) q`` (numpy's default ``linear`` rule).
    """
    return float(np.quantile(np.asarray(x, dtype=float), q, method="linear"))


def build_grid_2d(s2a, s2b, b1: int = 80, b2: int = 80):
    """Per-axis log-spaced grids from the 1% quantile to the maximum."""
    xa = _positive_finite(s2a, "s2a")
    xb = _positive_finite(s2b, "s2b")
    ga = _log_grid(grid_quantile(xa), float(xa.max()), b1)
    gb = _log_grid(grid_quantile(xb), float(xb.max()), b2)
    return ga, gb


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class SeparableLogLik:
    """Log-likelihood ``L[i, a*B2 + b] = la[i, a] + lb[i, b]`` without materializing it."""

    la: np.ndarray
    lb: np.ndarray

    @property
    def shape(self):
        return self.la.shape[0], self.la.shape[1] * self.lb.shape[1]


def _check_rows(L, what="log-likelihood"):
    if np.any(np.isnan(L)) or np.any(L == np.inf):
        bad = int(np.flatnonzero(np.any(np.isnan(L) | (L == np.inf), axis=1))[0])
        raise DataError(f"{what} row {bad} contains NaN or +inf")
    rowmax = L.max(axis=1)
    if np.any(rowmax == -np.inf):
        bad = int(np.flatnonzero(rowmax == -np.inf)[0])
        raise DataError(f"{what} row {bad} has no finite entry (zero likelihood everywhere)")
    return rowmax


class _DenseKernel:
    def __init__(self, L):
        L = np.asarray(L, dtype=float)
        if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 1:
            raise ShapeError(f"log-likelihood must be a nonempty n x B matrix, got shape {L.shape}")
        self.offset = _check_rows(L)
        self.K = np.exp(L - self.offset[:, None])
        self.n, self.size = self.K.shape

    def density(self, w):
        return self.K @ w

    def gradient(self, f):
        return (1.0 / f) @ self.K / self.n

    def columns(self, idx):
        return self.K[:, idx]

    def row_argmax(self, rows):
        return np.argmax(self.K[rows], axis=1)

    def local_maxima(self, d):
        # leftmost point of each plateau, which is also the tie-breaking rule
        left = np.concatenate([[-np.inf], d[:-1]])
        right = np.concatenate([d[1:], [-np.inf]])
        return np.flatnonzero((d > left) & (d >= right))

    def coarse(self, m=24):
        return np.unique(np.round(np.linspace(0, self.size - 1, min(m, self.size))).astype(int))


class _SeparableKernel:
    def __init__(self, sep: SeparableLogLik):
        la = np.asarray(sep.la, dtype=float)
        lb = np.asarray(sep.lb, dtype=float)
        if la.ndim != 2 or lb.ndim != 2 or la.shape[0] != lb.shape[0] or la.size == 0 or lb.size == 0:
            raise ShapeError("separable log-likelihood factors must be n x B1 and n x B2")
        oa = _check_rows(la, "log-likelihood (axis A)")
        ob = _check_rows(lb, "log-likelihood (axis B)")
        self.offset = oa + ob
        self.KA = np.exp(la - oa[:, None])
        self.KB = np.exp(lb - ob[:, None])
        self.n, self.b1 = self.KA.shape
        self.b2 = self.KB.shape[1]
        self.size = self.b1 * self.b2

    def density(self, w):
        W = w.reshape(self.b1, self.b2)
        return np.einsum("ij,ij->i", self.KA @ W, self.KB)

    def gradient(self, f):
        return ((self.KA / f[:, None]).T @ self.KB).ravel() / self.n

    def columns(self, idx):
        ia, ib = np.divmod(np.asarray(idx), self.b2)
        return self.KA[:, ia] * self.KB[:, ib]

    def row_argmax(self, rows):
        return np.argmax(self.KA[rows], axis=1) * self.b2 + np.argmax(self.KB[rows], axis=1)

    def local_maxima(self, d):
        D = d.reshape(self.b1, self.b2)
        P = np.pad(D, 1, constant_values=-np.inf)
        is_max = np.ones_like(D, dtype=bool)
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                if da == 0 and db == 0:
                    continue
                nb = P[1 + da : 1 + da + self.b1, 1 + db : 1 + db + self.b2]
                # strict against earlier neighbours, weak against later ones
                if (da, db) < (0, 0):
                    is_max &= D > nb
                else:
                    is_max &= D >= nb
        return np.flatnonzero(is_max.ravel())

    def coarse(self, m=8):
        ia = np.unique(np.round(np.linspace(0, self.b1 - 1, min(m, self.b1))).astype(int))
        ib = np.unique(np.round(np.linspace(0, self.b2 - 1, min(m, self.b2))).astype(int))
        return (ia[:, None] * self.b2 + ib[None, :]).ravel()


def _make_kernel(log_likelihood):
    if isinstance(log_likelihood, SeparableLogLik):
        return _SeparableKernel(log_likelihood)
    return _DenseKernel(log_likelihood)


# ---------------------------------------------------------------- solver


def _loglik(kern, f):
    return float(np.sum(np.log(f)) + np.sum(kern.offset))


def _initial_weights(kern):
    w = np.zeros(kern.size)
    start = kern.coarse()
    w[start] = 1.0 / start.size
    f = kern.density(w)
    starved = np.flatnonzero(f < 1e-200)
    if starved.size:
        # rows the coarse start cannot explain: add each row's best point
        extra = np.unique(kern.row_argmax(starved))
        idx = np.union1d(start, extra)
        w[:] = 0.0
        w[idx] = 1.0 / idx.size
        f = kern.density(w)
        if np.any(f < 1e-300):
            w[:] = 1.0 / kern.size
            f = kern.density(w)
    return w, f


def fit_npmle(log_likelihood, tol: Tolerance = NPMLE_TOL, support=None) -> NpmleFit:
    """Maximize the grid mixture log-likelihood over the simplex.

    Parameters
    ----------
    log_likelihood : ndarray of shape (n, B) or SeparableLogLik
        ``L[i, k] = log p(x_i | grid point k)``. Entries may be ``-inf``
        but every row needs at least one finite value.
    tol : Tolerance
        ``abs_tol`` is the certificate-gap target, ``rel_tol`` the relative
        log-likelihood change treated as a stall over ``STALL_WINDOW``
        iterations, ``max_iter`` the iteration budget.
    support : array or (array, array), optional
        Grid values attached to the returned prior. Defaults to the grid
        indices ``1..B`` (per axis for a separable kernel).

    Returns
    -------
    NpmleFit
        ``loglik`` is the summed log-likelihood at the returned weights. For
        a separable kernel the prior is a :class:`DiscretePrior2D` whose
        weights are indexed row-major over the product grid.
    """
    kern = _make_kernel(log_likelihood)
    n = kern.n

    if kern.size == 1:
        w = np.ones(1)
        f = kern.density(w)
        ll = _loglik(kern, f)
        return _wrap(kern, w, support, dict(loglik=ll, certificate_gap=0.0, iterations=0, converged=True, loglik_trace=[ll]))

    w, f = _initial_weights(kern)
    ll = _loglik(kern, f)
    trace = [ll]
    it = 0
    gap = np.inf
    while True:
        d = kern.gradient(f)
        gap = float(d.max() - 1.0)
        if gap <= tol.abs_tol or it >= tol.max_iter:
            break
        if len(trace) > STALL_WINDOW:
            old = trace[-1 - STALL_WINDOW]
            if abs(trace[-1] - old) <= tol.rel_tol * max(1.0, abs(old)):
                break
        it += 1

        active = np.flatnonzero(w > 0)
        cand = kern.local_maxima(d)
        cand = cand[d[cand] > 1.0]
        if cand.size == 0:
            cand = np.array([int(np.argmax(d))])
        S = np.union1d(active, cand)

        # Newton target: min ||A x - 2||^2 over the simplex; the sum-to-one
        # constraint enters as a heavily weighted extra row
        A = np.vstack([kern.columns(S) / f[:, None], np.full((1, S.size), SIMPLEX_ROW_WEIGHT * math.sqrt(n))])
        rhs = np.concatenate([np.full(n, NNLS_TARGET), [SIMPLEX_ROW_WEIGHT * math.sqrt(n)]])
        x, _ = nnls(A, rhs, maxiter=50 * S.size)
        if not np.any(x > 0):
            break
        target = np.zeros(kern.size)
        target[S] = x / x.sum()

        direction = target - w
        slope = n * (float(d @ target) - 1.0)
        if not slope > 0:
            break
        step = 1.0
        accepted = False
        while step > 1e-12:
            w_new = w + step * direction
            w_new[w_new < 0] = 0.0
            f_new = kern.density(w_new)
            if np.all(f_new > 0):
                ll_new = _loglik(kern, f_new)
                if ll_new >= ll + 1e-4 * step * slope:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        w = w_new / w_new.sum()
        f = kern.density(w)
        ll = _loglik(kern, f)
        trace.append(ll)

    # tidy: drop negligible mass, renormalize, re-certify
    w = np.where(w < TRUNCATE_BELOW, 0.0, w)
    w /= w.sum()
    f = kern.density(w)
    ll_final = _loglik(kern, f)
    gap = float(kern.gradient(f).max() - 1.0)
    if ll_final < trace[-1]:
        # truncation cost is below tolerance; keep the trace honest anyway
        trace.append(ll_final)
    return _wrap(kern, w, support, dict(
        loglik=ll_final,
        certificate_gap=max(gap, 0.0),
        iterations=it,
        converged=gap <= tol.abs_tol,
        loglik_trace=trace,
    ))


def _wrap(kern, w, support, info):
    if isinstance(kern, _SeparableKernel):
        if support is None:
            support = (np.arange(1.0, kern.b1 + 1), np.arange(1.0, kern.b2 + 1))
        prior = DiscretePrior2D.from_dense(support[0], support[1], w.reshape(kern.b1, kern.b2))
    else:
        if support is None:
            support = np.arange(1.0, kern.size + 1)
        prior = DiscretePrior1D(support, w)
    return NpmleFit(prior, **info)


# ---------------------------------------------------------------- priors


def _df_arrays(nu_a, nu_b, n):
    nu_a = np.broadcast_to(np.asarray(nu_a, dtype=float), (n,))
    nu_b = np.broadcast_to(np.asarray(nu_b, dtype=float), (n,))
    if np.any(nu_a < 2) or np.any(nu_b < 2):
        raise DomainError(
            "empirical-Bayes priors need at least 3 replicates per group (degrees of freedom >= 2)"
        )
    return nu_a, nu_b


def vr_loglik_matrix(lambda_hat, grid, nu_a, nu_b) -> np.ndarray:
    """``L[i, k] = log p(lambda_hat_i | grid_k)`` for the scaled-F kernel."""
    lam = np.asarray(lambda_hat, dtype=float).ravel()
    if lam.size == 0:
        raise ShapeError("no variance ratios to fit")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        bad = int(np.flatnonzero(~(np.isfinite(lam) & (lam > 0)))[0])
        raise DataError(f"variance ratio {bad} is not finite and positive (degenerate feature?)")
    nu_a, nu_b = _df_arrays(nu_a, nu_b, lam.size)
    return _f_scaled_logpdf(lam[:, None], np.asarray(grid, float)[None, :], nu_a[:, None], nu_b[:, None])


def dv_loglik_factors(s2a, s2b, grid_a, grid_b, nu_a, nu_b) -> SeparableLogLik:
    """Separable log-likelihood for the product of two scaled chi-square kernels."""
    s2a = np.asarray(s2a, dtype=float).ravel()
    s2b = np.asarray(s2b, dtype=float).ravel()
    if s2a.size == 0 or s2a.shape != s2b.shape:
        raise ShapeError("s2a and s2b must be nonempty and of equal length")
    for name, s in (("s2a", s2a), ("s2b", s2b)):
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            bad = int(np.flatnonzero(~(np.isfinite(s) & (s > 0)))[0])
            raise DataError(f"{name}[{bad}] is not finite and positive (degenerate feature?)")
    nu_a, nu_b = _df_arrays(nu_a, nu_b, s2a.size)
    la = _chi2_scaled_logpdf(s2a[:, None], np.asarray(grid_a, float)[None, :], nu_a[:, None])
    lb = _chi2_scaled_logpdf(s2b[:, None], np.asarray(grid_b, float)[None, :], nu_b[:, None])
    return SeparableLogLik(la, lb)


def fit_vr_prior(lambda_hat, nu_a, nu_b, b: int = 1000, tol: Tolerance = NPMLE_TOL) -> NpmleFit:
    """Fit the variance-ratio prior on a ``b``-point log grid."""
    grid = build_grid_1d(lambda_hat, b)
    L = vr_loglik_matrix(lambda_hat, grid, nu_a, nu_b)
    return fit_npmle(L, tol, support=grid)


def fit_dv_prior(s2a, s2b, nu_a, nu_b, b1: int = 80, b2: int = 80, tol: Tolerance = NPMLE_TOL) -> NpmleFit:
    """Fit the bivariate prior over ``(sigma2_a, sigma2_b)`` on a product grid."""
    ga, gb = build_grid_2d(s2a, s2b, b1, b2)
    sep = dv_loglik_factors(s2a, s2b, ga, gb, nu_a, nu_b)
    return fit_npmle(sep, tol, support=(ga, gb))
