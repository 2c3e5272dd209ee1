"""Multiple-testing correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

__all__ = ["RejectionResult", "benjamini_hochberg"]


@dataclass(frozen=True)
class RejectionResult:
    q_values: np.ndarray
    rejected: np.ndarray
    alpha: float

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))


def benjamini_hochberg(p, alpha: float = 0.1) -> RejectionResult:
    """Benjamini-Hochberg step-up procedure.

    Adjusted values are ``q_(i) = min_{j >= i} min(1, m p_(j) / j)`` and a
    hypothesis is rejected iff its q-value is at most ``alpha``, which is the
    same set as the step-up rule ``i <= max{j : p_(j) <= alpha j / m}``.
    Tied p-values receive the same q-value.

    Parameters
    ----------
    p : array_like
        P-values in (0, 1]. Missing values must be dropped by the caller.
    alpha : float
        Target FDR level in (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ShapeError("p must be one-dimensional")
    m = p.size
    if m == 0:
        raise ShapeError("benjamini_hochberg needs at least one p-value")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("p-values must be finite and lie in [0, 1]")
    if not (0 < alpha < 1):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    order = np.argsort(p, kind="stable")
    # divide by j/m rather than multiply by m/j so that p_(m) maps to itself exactly
    ranked = p[order] / (np.arange(1, m + 1) / m)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    np.minimum(q_sorted, 1.0, out=q_sorted)
    q = np.empty(m)
    q[order] = q_sorted
    return RejectionResult(q_values=q, rejected=q <= alpha, alpha=float(alpha))
