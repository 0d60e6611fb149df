"""Kurtosis of endmember spectra and the gradient of its average.

Moments are population moments over the band axis (divide by ``n``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignal
from .model import as_array

EPS = 1e-12


@dataclass(frozen=True)
class KurtosisReport:
    per_endmember: tuple
    average: float
    average_excess: float


def kurtosis(signal, epsilon_guard: float = EPS) -> float:
    """Fourth central moment over squared variance (3 for a Gaussian)."""
    y = np.asarray(signal, dtype=np.float64).ravel()
    if y.size < 2:
        raise DegenerateSignal("kurtosis needs at least two samples")
    d = y - y.mean()
    d2 = d * d
    m2 = d2.mean()
    if m2 <= epsilon_guard:
        raise DegenerateSignal(f"signal variance {m2:g} is not above {epsilon_guard:g}")
    return float((d2 * d2).mean() / (m2 * m2))


def column_kurtosis(A, epsilon_guard: float = EPS) -> np.ndarray:
    A = as_array(A)
    if A.shape[0] < 2:
        raise DegenerateSignal("kurtosis needs at least two bands")
    D = A - A.mean(axis=0)
    D2 = D * D
    m2 = D2.mean(axis=0)
    low = np.flatnonzero(m2 <= epsilon_guard)
    if low.size:
        i = int(low[0])
        raise DegenerateSignal(f"endmember column {i} has variance {m2[i]:g}", column=i)
    return (D2 * D2).mean(axis=0) / (m2 * m2)


def average_kurtosis(A, epsilon_guard: float = EPS) -> KurtosisReport:
    k = column_kurtosis(A, epsilon_guard)
    avg = float(k.mean())
    return KurtosisReport(tuple(float(v) for v in k), avg, avg - 3.0)


def average_excess_kurtosis_or_nan(A, epsilon_guard: float = EPS) -> float:
    try:
        return float(column_kurtosis(A, epsilon_guard).mean()) - 3.0
    except DegenerateSignal:
        return float("nan")


def centering_matrix(n: int) -> np.ndarray:
    """``I - ones(n, n) / n``: removes the mean from each column it multiplies."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _center(B):
    # N @ B without forming N
    return B - B.mean(axis=0, keepdims=True)


def kurtosis_direction(A) -> np.ndarray:
    """``N (N A)^3``: the matrix shared by the gradient and the update rules."""
    C = _center(as_array(A))
    return _center(C * C * C)


def grad_average_kurtosis(A, check_unit_variance: bool = False, tol: float = 1e-6) -> np.ndarray:
    """Gradient of the average kurtosis for unit-variance columns.

    Returns ``4 / (n r) * N (N A)^3``, which is exactly the gradient of the
    average fourth central moment ``(1/r) sum_i m4(a_i)``.  It equals the
    gradient of the average kurtosis only when every column has unit
    population variance; callers normalize before using it.
    """
    A = as_array(A)
    n, r = A.shape
    if check_unit_variance:
        var = A.var(axis=0)
        if np.any(np.abs(var - 1.0) > tol):
            raise ValueError(f"columns are not unit variance: {var}")
    return (4.0 / (n * r)) * kurtosis_direction(A)


def average_fourth_moment(A) -> float:
    A = as_array(A)
    D = A - A.mean(axis=0)
    return float(((D * D) ** 2).mean(axis=0).mean())
