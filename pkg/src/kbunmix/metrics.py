"""Spectral angle, abundance RMSE and optimal endmember matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, ZeroVector
from .model import as_array


@dataclass(frozen=True)
class EvaluationReport:
    """Per-endmember scores under one extracted-to-truth assignment.

    ``assignment[i]`` is the ground-truth index paired with extracted
    endmember ``i``.  Per-endmember lists are ordered by extracted index.
    """

    assignment: tuple
    sad_per_endmember: tuple
    sad_average: float
    rmse_per_endmember: tuple
    rmse_average: float

    def to_dict(self) -> dict:
        return {
            "assignment": list(self.assignment),
            "sad_per_endmember": list(self.sad_per_endmember),
            "sad_average": self.sad_average,
            "rmse_per_endmember": list(self.rmse_per_endmember),
            "rmse_average": self.rmse_average,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            tuple(int(i) for i in d["assignment"]),
            tuple(float(v) for v in d["sad_per_endmember"]),
            float(d["sad_average"]),
            tuple(float(v) for v in d["rmse_per_endmember"]),
            float(d["rmse_average"]),
        )


def sad(a_hat, a) -> float:
    """Spectral angle in radians between two nonzero vectors.

    Evaluated as ``2 atan2(|u - v|, |u + v|)`` on the unit vectors, which
    equals ``arccos(u . v)`` but keeps full precision near zero angle.
    """
    a_hat = np.asarray(a_hat, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if a_hat.shape != a.shape:
        raise DimensionMismatch("n", a.shape[0], a_hat.shape[0], "spectra")
    na, nb = np.linalg.norm(a_hat), np.linalg.norm(a)
    if na == 0 or nb == 0:
        raise ZeroVector("spectral angle is undefined for a zero vector")
    u, v = a_hat / na, a / nb
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def sad_matrix(A_hat, A) -> np.ndarray:
    """``C[i, j] = sad(A_hat[:, i], A[:, j])``."""
    A_hat, A = as_array(A_hat), as_array(A)
    if A_hat.shape[0] != A.shape[0]:
        raise DimensionMismatch("n", A.shape[0], A_hat.shape[0], "endmember bands")
    nh, nt = np.linalg.norm(A_hat, axis=0), np.linalg.norm(A, axis=0)
    if np.any(nh == 0) or np.any(nt == 0):
        raise ZeroVector("spectral angle is undefined for a zero column")
    U, V = (A_hat / nh)[:, :, None], (A / nt)[:, None, :]
    return 2.0 * np.arctan2(np.linalg.norm(U - V, axis=0), np.linalg.norm(U + V, axis=0))


def rmse(s_hat, s) -> float:
    """Root mean square difference of two equal-length abundance maps."""
    s_hat = np.asarray(s_hat, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if s_hat.shape != s.shape:
        raise DimensionMismatch("m", s.shape[0], s_hat.shape[0], "abundance maps")
    if s.size == 0:
        raise DimensionMismatch("m", 1, 0, "abundance maps must be non-empty")
    d = s - s_hat
    return float(np.sqrt(np.dot(d, d) / d.size))


def optimal_assignment(cost) -> np.ndarray:
    """Permutation ``p`` minimizing ``sum_i cost[i, p[i]]``."""
    cost = np.asarray(cost, dtype=np.float64)
    rows, cols = linear_sum_assignment(cost)
    p = np.empty(cost.shape[0], dtype=int)
    p[rows] = cols
    return p


def sum_to_one(S, epsilon_guard: float = 1e-12) -> np.ndarray:
    """Scale each abundance column to sum to one; all-zero columns stay zero."""
    S = as_array(S)
    tot = S.sum(axis=0, keepdims=True)
    return S / np.where(tot > epsilon_guard, tot, 1.0)


def evaluate(A_hat, S_hat, A, S, renormalize: bool = True) -> EvaluationReport:
    """Match extracted columns to truth by minimum total SAD and score both factors.

    Parameters
    ----------
    A_hat, S_hat : array_like
        Extracted endmembers ``(n, r)`` and abundances ``(r, m)``.
    A, S : array_like
        Ground truth with the same shapes.
    renormalize : bool
        Scale extracted abundance columns to sum to one before RMSE.
    """
    A_hat, S_hat, A, S = (as_array(x) for x in (A_hat, S_hat, A, S))
    if A_hat.shape[1] != A.shape[1]:
        raise DimensionMismatch("r", A.shape[1], A_hat.shape[1], "endmember count")
    if S_hat.shape != S.shape:
        axis = "r" if S_hat.shape[0] != S.shape[0] else "m"
        k = 0 if axis == "r" else 1
        raise DimensionMismatch(axis, S.shape[k], S_hat.shape[k], "abundances")
    if S_hat.shape[0] != A_hat.shape[1]:
        raise DimensionMismatch("r", A_hat.shape[1], S_hat.shape[0], "extracted abundances")
    C = sad_matrix(A_hat, A)
    p = optimal_assignment(C)
    if renormalize:
        S_hat = sum_to_one(S_hat)
    sads = tuple(float(C[i, p[i]]) for i in range(len(p)))
    rmses = tuple(rmse(S_hat[i], S[p[i]]) for i in range(len(p)))
    return EvaluationReport(
        assignment=tuple(int(j) for j in p),
        sad_per_endmember=sads,
        sad_average=float(np.mean(sads)),
        rmse_per_endmember=rmses,
        rmse_average=float(np.mean(rmses)),
    )


def match_and_evaluate(result, truth_A, truth_S, renormalize: bool = True) -> EvaluationReport:
    """Evaluate an ``UnmixResult`` against ground truth.

    Abundances are taken as ``M @ S`` so they match the model ``A M S``
    that produced the fit.
    """
    return evaluate(result.endmembers.data, result.effective_abundances,
                    as_array(truth_A), as_array(truth_S), renormalize)
