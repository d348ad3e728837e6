"""Empirical asymptotic-variance and acceptance-rate estimates from traces.

The batch-means estimator does not detect infinite asymptotic variance: for
chains that are not geometrically ergodic it still returns a finite number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InsufficientDataError",
    "VarianceEstimate",
    "acceptance_rate",
    "asymptotic_variance",
    "iid_variance",
]


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    n_used: int
    batch_size: int
    standard_error_of_mean: float

    @property
    def n_batches(self) -> int:
        return self.n_used // self.batch_size


def asymptotic_variance(values) -> VarianceEstimate:
    """Non-overlapping batch means with batch size ``floor(sqrt(n))``.

    Returns ``b * var(batch means)``, a consistent estimate of
    ``lim n Var(mean)`` for a reversible chain with finite asymptotic
    variance. Trailing values that do not fill a batch are dropped.
    """
    x = np.asarray(values, dtype=float).ravel()
    n = len(x)
    if n < 100:
        raise InsufficientDataError(f"need at least 100 values, got {n}")
    b = math.isqrt(n)
    a = n // b
    means = x[: a * b].reshape(a, b).mean(axis=1)
    value = max(0.0, b * float(np.var(means - means.mean(), ddof=1)))
    return VarianceEstimate(value, a * b, b, math.sqrt(value / (a * b)))


def iid_variance(values) -> float:
    """Unbiased sample variance."""
    x = np.asarray(values, dtype=float).ravel()
    if len(x) < 2:
        raise InsufficientDataError("need at least 2 values")
    return float(np.var(x, ddof=1))


def acceptance_rate(trace) -> float:
    """Fraction of proposals accepted; holding moves are not proposals."""
    acc = np.asarray(trace.accepted, dtype=bool)
    held = getattr(trace, "held", None)
    if held is not None:
        acc = acc[~np.asarray(held, dtype=bool)]
    if len(acc) == 0:
        raise InsufficientDataError("trace has no proposals")
    return float(np.count_nonzero(acc)) / len(acc)
