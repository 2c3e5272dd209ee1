"""Special functions and the handful of distributions the tests are built on.

Everything here is vectorized over numpy arrays and works with real-valued
(non-integer) degrees of freedom. Densities are returned on the log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, NumericError

__all__ = [
    "Tolerance",
    "log_gamma",
    "log_beta",
    "reg_inc_beta",
    "normal_cdf",
    "t_cdf",
    "t_logpdf",
    "f_cdf",
    "chi2_scaled_logpdf",
    "f_scaled_logpdf",
    "gauss_legendre",
]

_CF_MAX_TERMS = 300
_CF_EPS = 1e-15
_TINY = 1e-300


@dataclass(frozen=True)
class Tolerance:
    """Absolute/relative tolerance plus an iteration budget."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 300

    def __post_init__(self):
        if not (self.abs_tol > 0 and math.isfinite(self.abs_tol)):
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if not (self.rel_tol > 0 and math.isfinite(self.rel_tol)):
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError(f"max_iter must be a positive integer, got {self.max_iter}")


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _scalar_or_array(arr):
    return arr.item() if arr.ndim == 0 else arr


_lgamma_ufunc = np.frompyfunc(math.lgamma, 1, 1)


def log_gamma(x):
    """Natural log of the gamma function for positive ``x``.

    Backed by the C library ``lgamma`` (via :func:`math.lgamma`), which is
    accurate to a few ulps over the positive axis.
    """
    arr = _as_float_array(x, "x")
    if np.any(arr <= 0):
        raise DomainError("log_gamma requires x > 0")
    if arr.ndim == 0:
        return math.lgamma(float(arr))
    # df-driven arguments repeat heavily; evaluate each distinct value once
    uniq, inv = np.unique(arr, return_inverse=True)
    vals = _lgamma_ufunc(uniq).astype(float)
    return vals[inv].reshape(arr.shape)


def log_beta(a, b):
    return log_gamma(a) + log_gamma(b) - log_gamma(np.add(a, b))


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b) (modified Lentz), elementwise.

    Only unconverged entries are iterated, so cost tracks the slowest
    entries rather than the whole array.
    """
    a, b, x = np.broadcast_arrays(a, b, x)
    shape = a.shape
    a = a.ravel().astype(float)
    b = b.ravel().astype(float)
    x = x.ravel().astype(float)

    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _TINY, _TINY, d)
    d = 1.0 / d
    h = d.copy()

    out = np.empty_like(x)
    active = np.arange(x.size)
    for m in range(1, _CF_MAX_TERMS + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        h = h * d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta

        done = np.abs(delta - 1.0) < _CF_EPS
        if done.any():
            out[active[done]] = h[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                return out.reshape(shape)
            a, b, x, qab, qap, qam, c, d, h = (
                v[keep] for v in (a, b, x, qab, qap, qam, c, d, h)
            )
    raise NumericError(
        f"incomplete beta continued fraction did not converge in {_CF_MAX_TERMS} terms "
        f"(e.g. a={a[0]:g}, b={b[0]:g}, x={x[0]:g})"
    )


def _betainc(a, b, x, y):
    """I_x(a, b) given both ``x`` and ``y = 1 - x``.

    Taking ``y`` separately lets callers avoid cancellation when x is near 1
    (t CDF near zero, F CDF far in the tail).

    The continued fraction converges fastest for x < (a + 1) / (a + b + 2);
    beyond that crossover the symmetry I_x(a, b) = 1 - I_{1-x}(b, a) is used.
    """
    a, b, x, y = np.broadcast_arrays(
        np.asarray(a, float), np.asarray(b, float), np.asarray(x, float), np.asarray(y, float)
    )
    with np.errstate(divide="ignore"):
        log_front = (
            log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * np.log(x) + b * np.log(y)
        )
    front = np.exp(log_front)
    direct = x < (a + 1.0) / (a + b + 2.0)
    res = np.empty(a.shape, dtype=float)
    if direct.any():
        res[direct] = front[direct] * _betacf(a[direct], b[direct], x[direct]) / a[direct]
    flip = ~direct
    if flip.any():
        res[flip] = 1.0 - front[flip] * _betacf(b[flip], a[flip], y[flip]) / b[flip]
    res[x == 0.0] = 0.0
    res[y == 0.0] = 1.0
    return np.clip(res, 0.0, 1.0)


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    a = _as_float_array(a, "a")
    b = _as_float_array(b, "b")
    x = _as_float_array(x, "x")
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("reg_inc_beta requires a, b > 0")
    if np.any((x < 0) | (x > 1)):
        raise DomainError("reg_inc_beta requires 0 <= x <= 1")
    return _scalar_or_array(_betainc(a, b, x, 1.0 - x))


_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def normal_cdf(x):
    """Standard normal CDF, accurate far into the lower tail."""
    arr = _as_float_array(x, "x")
    if arr.ndim == 0:
        return 0.5 * math.erfc(-float(arr) / math.sqrt(2.0))
    return 0.5 * _erfc_ufunc(-arr / math.sqrt(2.0)).astype(float)


def _t_cdf(x, nu):
    x, nu = np.broadcast_arrays(np.asarray(x, float), np.asarray(nu, float))
    t2 = x * x
    # lower tail mass beyond |x|
    tail = 0.5 * _betainc(0.5 * nu, 0.5, nu / (nu + t2), t2 / (nu + t2))
    return np.where(x < 0, tail, 1.0 - tail)


def t_cdf(x, nu):
    """Student t CDF with (possibly fractional) ``nu`` degrees of freedom."""
    x = _as_float_array(x, "x")
    nu = _as_float_array(nu, "nu")
    if np.any(nu <= 0):
        raise DomainError("t_cdf requires nu > 0")
    return _scalar_or_array(_t_cdf(x, nu))


def t_logpdf(x, nu):
    x = _as_float_array(x, "x")
    nu = _as_float_array(nu, "nu")
    if np.any(nu <= 0):
        raise DomainError("t_logpdf requires nu > 0")
    out = (
        log_gamma(0.5 * (nu + 1.0))
        - log_gamma(0.5 * nu)
        - 0.5 * np.log(nu * math.pi)
        - 0.5 * (nu + 1.0) * np.log1p(x * x / nu)
    )
    return _scalar_or_array(np.asarray(out, dtype=float))


def f_cdf(x, nu1, nu2):
    """CDF of the F distribution with ``nu1`` and ``nu2`` degrees of freedom."""
    x = _as_float_array(x, "x")
    nu1 = _as_float_array(nu1, "nu1")
    nu2 = _as_float_array(nu2, "nu2")
    if np.any(x < 0):
        raise DomainError("f_cdf requires x >= 0")
    if np.any(nu1 <= 0) or np.any(nu2 <= 0):
        raise DomainError("f_cdf requires positive degrees of freedom")
    denom = nu1 * x + nu2
    return _scalar_or_array(_betainc(0.5 * nu1, 0.5 * nu2, nu1 * x / denom, nu2 / denom))


def _chi2_scaled_logpdf(s2, sigma2, nu):
    r = nu * s2 / sigma2
    return (
        np.log(nu / sigma2)
        - 0.5 * nu * math.log(2.0)
        - log_gamma(0.5 * nu)
        + (0.5 * nu - 1.0) * np.log(r)
        - 0.5 * r
    )


def chi2_scaled_logpdf(s2, sigma2, nu):
    """Log density of a sample variance: s2 ~ sigma2 * chi2_nu / nu."""
    s2 = _as_float_array(s2, "s2")
    sigma2 = _as_float_array(sigma2, "sigma2")
    nu = _as_float_array(nu, "nu")
    if np.any(s2 <= 0) or np.any(sigma2 <= 0) or np.any(nu <= 0):
        raise DomainError("chi2_scaled_logpdf requires s2, sigma2, nu > 0")
    return _scalar_or_array(np.asarray(_chi2_scaled_logpdf(s2, sigma2, nu), dtype=float))


def _f_scaled_logpdf(lhat, lam, nu_a, nu_b):
    r = lhat / lam
    return (
        -np.log(lam)
        - log_beta(0.5 * nu_a, 0.5 * nu_b)
        + 0.5 * nu_a * np.log(nu_a / nu_b)
        + (0.5 * nu_a - 1.0) * np.log(r)
        - 0.5 * (nu_a + nu_b) * np.log1p(nu_a * r / nu_b)
    )


def f_scaled_logpdf(lhat, lam, nu_a, nu_b):
    """Log density of a variance ratio: lhat ~ lam * F(nu_a, nu_b)."""
    lhat = _as_float_array(lhat, "lhat")
    lam = _as_float_array(lam, "lambda")
    nu_a = _as_float_array(nu_a, "nu_a")
    nu_b = _as_float_array(nu_b, "nu_b")
    if np.any(lhat <= 0) or np.any(lam <= 0) or np.any(nu_a <= 0) or np.any(nu_b <= 0):
        raise DomainError("f_scaled_logpdf requires positive arguments")
    return _scalar_or_array(np.asarray(_f_scaled_logpdf(lhat, lam, nu_a, nu_b), dtype=float))


@lru_cache(maxsize=16)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
