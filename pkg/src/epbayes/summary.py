"""Per-feature sufficient statistics and the quantities derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "FeatureSummary",
    "DerivedStats",
    "FeatureTable",
    "summarize",
    "summarize_matrix",
    "behrens_fisher_stat",
]


@dataclass(frozen=True)
class FeatureSummary:
    """Sample means, variances and replicate counts for one feature.

    ``n_eff_a``/``n_eff_b`` are the precision-weight sums; they default to the
    replicate counts for unweighted data.
    """

    feature_id: str
    mean_a: float
    var_a: float
    k_a: int
    mean_b: float
    var_b: float
    k_b: int
    n_eff_a: Optional[float] = None
    n_eff_b: Optional[float] = None

    def __post_init__(self):
        for name in ("k_a", "k_b"):
            k = getattr(self, name)
            if int(k) != k or k < 2:
                raise ShapeError(f"feature {self.feature_id!r}: {name} must be an integer >= 2, got {k}")
            object.__setattr__(self, name, int(k))
        for name in ("mean_a", "mean_b", "var_a", "var_b"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise DomainError(f"feature {self.feature_id!r}: {name} must be finite")
            object.__setattr__(self, name, v)
        if self.var_a < 0 or self.var_b < 0:
            raise DomainError(f"feature {self.feature_id!r}: variances must be nonnegative")
        if self.n_eff_a is None:
            object.__setattr__(self, "n_eff_a", float(self.k_a))
        if self.n_eff_b is None:
            object.__setattr__(self, "n_eff_b", float(self.k_b))
        for name in ("n_eff_a", "n_eff_b"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"feature {self.feature_id!r}: {name} must be positive")
            object.__setattr__(self, name, v)

    @property
    def nu_a(self) -> int:
        return self.k_a - 1

    @property
    def nu_b(self) -> int:
        return self.k_b - 1

    @property
    def degenerate(self) -> bool:
        return self.var_a == 0.0 or self.var_b == 0.0

    @property
    def lambda_hat(self) -> float:
        return _ratio(self.var_a, self.var_b)


def _ratio(va, vb):
    if vb == 0.0:
        return math.inf if va > 0 else math.nan
    return va / vb


@dataclass(frozen=True)
class DerivedStats:
    lambda_hat: float
    t_bf: float
    zeta_hat: float
    degenerate: bool


def _group_moments(x, w):
    # two-pass: weighted mean, then centered squares
    x = np.asarray(x, dtype=float)
    k = x.size
    if w is None:
        w = np.ones(k)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != x.shape:
            raise ShapeError(f"weights have length {w.size}, observations {k}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("precision weights must be finite and strictly positive")
    n_eff = float(np.sum(w))
    mean = float(np.sum(w * x) / n_eff)
    var = float(np.sum(w * (x - mean) ** 2) / (k - 1))
    return mean, var, n_eff


def summarize(
    observations_a: Sequence[float],
    observations_b: Sequence[float],
    weights_a: Optional[Sequence[float]] = None,
    weights_b: Optional[Sequence[float]] = None,
    feature_id: str = "",
) -> FeatureSummary:
    """Reduce two groups of observations to a :class:`FeatureSummary`.

    With weights, means are ``sum(w x) / sum(w)`` and variances are
    ``sum(w (x - xbar)^2) / (K - 1)``; the effective sample size is ``sum(w)``.
    Without weights the same code runs with unit weights, so passing all-ones
    weights gives a bitwise identical result.
    """
    xa = np.asarray(observations_a, dtype=float)
    xb = np.asarray(observations_b, dtype=float)
    if xa.ndim != 1 or xb.ndim != 1:
        raise ShapeError("observations must be one-dimensional")
    if xa.size < 2 or xb.size < 2:
        raise ShapeError(
            f"feature {feature_id!r}: each group needs at least 2 observations "
            f"(got {xa.size} and {xb.size})"
        )
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(xb))):
        raise DomainError(f"feature {feature_id!r}: observations must be finite")
    ma, va, na = _group_moments(xa, weights_a)
    mb, vb, nb = _group_moments(xb, weights_b)
    return FeatureSummary(feature_id, ma, va, xa.size, mb, vb, xb.size, na, nb)


def _bf_arrays(mean_a, var_a, n_a, mean_b, var_b, n_b, nu_a, nu_b):
    diff = mean_a - mean_b
    se2 = var_a / n_a + var_b / n_b
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bf = diff / np.sqrt(se2)
        lam = var_a / var_b
        zeta = np.abs(diff) / np.sqrt(var_b / (nu_a + nu_b))
    return lam, t_bf, zeta


def behrens_fisher_stat(s: FeatureSummary) -> DerivedStats:
    """Variance ratio, Behrens-Fisher statistic and scaled mean gap.

    ``lambda_hat`` is ``+inf`` when only ``var_b`` is zero and ``0`` when only
    ``var_a`` is zero; both cases are flagged degenerate. When both variances
    vanish the statistic is undefined and ``t_bf`` is ``nan``.
    """
    if s.var_a == 0.0 and s.var_b == 0.0:
        return DerivedStats(math.nan, math.nan, math.nan, True)
    diff = s.mean_a - s.mean_b
    t_bf = diff / math.sqrt(s.var_a / s.n_eff_a + s.var_b / s.n_eff_b)
    zeta = abs(diff) / math.sqrt(s.var_b / (s.nu_a + s.nu_b)) if s.var_b > 0 else math.inf
    return DerivedStats(s.lambda_hat, t_bf, zeta, s.degenerate)


class FeatureTable(Sequence):
    """Column-oriented collection of feature summaries.

    Holds the same fields as :class:`FeatureSummary` as numpy arrays so that
    tens of thousands of features can be tested without per-row objects.
    Indexing yields :class:`FeatureSummary` instances.
    """

    def __init__(self, feature_id, mean_a, var_a, k_a, mean_b, var_b, k_b, n_eff_a=None, n_eff_b=None):
        self.mean_a = np.asarray(mean_a, dtype=float)
        n = self.mean_a.size
        self.var_a = np.asarray(var_a, dtype=float)
        self.mean_b = np.asarray(mean_b, dtype=float)
        self.var_b = np.asarray(var_b, dtype=float)
        self.k_a = np.broadcast_to(np.asarray(k_a, dtype=np.int64), (n,)).copy()
        self.k_b = np.broadcast_to(np.asarray(k_b, dtype=np.int64), (n,)).copy()
        self.n_eff_a = self.k_a.astype(float) if n_eff_a is None else np.asarray(n_eff_a, dtype=float)
        self.n_eff_b = self.k_b.astype(float) if n_eff_b is None else np.asarray(n_eff_b, dtype=float)
        if feature_id is None:
            feature_id = [f"f{i}" for i in range(n)]
        self.feature_id = list(feature_id)
        for name in ("var_a", "mean_b", "var_b", "n_eff_a", "n_eff_b"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if len(self.feature_id) != n:
            raise ShapeError("feature_id length does not match")
        if np.any(self.k_a < 2) or np.any(self.k_b < 2):
            raise ShapeError("replicate counts must be >= 2")
        if np.any(self.var_a < 0) or np.any(self.var_b < 0):
            raise DomainError("variances must be nonnegative")

    @classmethod
    def from_summaries(cls, features: Sequence[FeatureSummary]) -> "FeatureTable":
        if isinstance(features, FeatureTable):
            return features
        cols = {
            name: [getattr(f, name) for f in features]
            for name in ("feature_id", "mean_a", "var_a", "k_a", "mean_b", "var_b", "k_b", "n_eff_a", "n_eff_b")
        }
        return cls(**cols)

    def __len__(self):
        return self.mean_a.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            idx = range(*i.indices(len(self)))
            return [self[j] for j in idx]
        return FeatureSummary(
            self.feature_id[i],
            float(self.mean_a[i]),
            float(self.var_a[i]),
            int(self.k_a[i]),
            float(self.mean_b[i]),
            float(self.var_b[i]),
            int(self.k_b[i]),
            float(self.n_eff_a[i]),
            float(self.n_eff_b[i]),
        )

    def __iter__(self) -> Iterator[FeatureSummary]:
        for i in range(len(self)):
            yield self[i]

    @property
    def nu_a(self):
        return self.k_a - 1

    @property
    def nu_b(self):
        return self.k_b - 1

    @property
    def degenerate(self):
        return (self.var_a == 0.0) | (self.var_b == 0.0)

    def derived(self):
        """Arrays ``(lambda_hat, t_bf, zeta_hat)``; degenerate rows hold inf/nan."""
        return _bf_arrays(
            self.mean_a, self.var_a, self.n_eff_a, self.mean_b, self.var_b, self.n_eff_b, self.nu_a, self.nu_b
        )


def summarize_matrix(xa, xb, wa=None, wb=None, feature_id=None) -> FeatureTable:
    """Row-wise :func:`summarize` for ``n x K_A`` and ``n x K_B`` matrices."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    if xa.ndim != 2 or xb.ndim != 2 or xa.shape[0] != xb.shape[0]:
        raise ShapeError("expected two matrices with the same number of rows")
    if xa.shape[1] < 2 or xb.shape[1] < 2:
        raise ShapeError("each group needs at least 2 observation columns")

    def moments(x, w):
        k = x.shape[1]
        if w is None:
            w = np.ones_like(x)
        else:
            w = np.asarray(w, dtype=float)
            if w.shape != x.shape:
                raise ShapeError("weights must match the observation matrix shape")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DomainError("precision weights must be finite and strictly positive")
        n_eff = w.sum(axis=1)
        mean = (w * x).sum(axis=1) / n_eff
        var = (w * (x - mean[:, None]) ** 2).sum(axis=1) / (k - 1)
        return mean, var, n_eff

    ma, va, na = moments(xa, wa)
    mb, vb, nb = moments(xb, wb)
    return FeatureTable(feature_id, ma, va, xa.shape[1], mb, vb, xb.shape[1], na, nb)
