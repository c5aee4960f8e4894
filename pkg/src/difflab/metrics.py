"""2-Wasserstein distances used by the experiments."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


def w2_gaussian_isotropic(var1: float, var2: float, d: int) -> float:
    """W2 between ``N(0, var1 I_d)`` and ``N(0, var2 I_d)``."""
    if var1 < 0 or var2 < 0:
        raise DomainError("variances must be nonnegative")
    if d < 1:
        raise DomainError("d must be >= 1")
    return math.sqrt(d) * abs(math.sqrt(var1) - math.sqrt(var2))


def w2_gaussian_general(mean1, cov_diag1, mean2, cov_diag2) -> float:
    """W2 between Gaussians with diagonal covariances.

    For commuting covariances the Bures term reduces to a coordinate-wise
    difference of standard deviations.
    """
    m1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    m2 = np.atleast_1d(np.asarray(mean2, dtype=float))
    c1 = np.atleast_1d(np.asarray(cov_diag1, dtype=float))
    c2 = np.atleast_1d(np.asarray(cov_diag2, dtype=float))
    if not (m1.shape == m2.shape == c1.shape == c2.shape):
        raise DomainError("means and covariance diagonals must share one shape")
    if np.any(c1 < 0) or np.any(c2 < 0):
        raise DomainError("covariance diagonals must be nonnegative")
    sq = np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(c1) - np.sqrt(c2)) ** 2)
    return float(math.sqrt(sq))


def w2_empirical_1d(samples_a, samples_b) -> float:
    """Exact W2 between two equal-size 1-D empirical measures (sorted coupling)."""
    a = np.sort(np.ravel(np.asarray(samples_a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(samples_b, dtype=float)))
    if a.size != b.size:
        raise DomainError(f"sample counts differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise DomainError("empty sample")
    return float(math.sqrt(np.mean((a - b) ** 2)))
