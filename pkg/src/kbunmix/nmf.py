"""Lee-Seung NMF: objectives, multiplicative updates and the baseline solver."""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import kl_div, xlogy

from .errors import DomainError, InvalidRank, RankTooLarge
from .model import (
    AbundanceMatrix,
    EndmemberMatrix,
    SolverConfig,
    UnmixResult,
    as_array,
    validate_dimensions,
)

log = logging.getLogger(__name__)

EPS = 1e-12


def frobenius_sq(X, A, S) -> float:
    """Squared Frobenius norm of the residual ``X - A @ S``."""
    validate_dimensions(X, A, S)
    R = as_array(X) - as_array(A) @ as_array(S)
    return float(np.sum(R * R))


def divergence(X, A, S, epsilon_guard: float = EPS) -> float:
    """Generalized KL divergence of ``X`` from ``A @ S``.

    Uses ``0 * log(0 / q) = 0``.  Raises ``DomainError`` if some positive
    ``X`` entry faces a reconstruction ``<= epsilon_guard``.
    """
    validate_dimensions(X, A, S)
    Xa = as_array(X)
    Y = as_array(A) @ as_array(S)
    bad = (Xa > 0) & (Y <= epsilon_guard)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DomainError(
            f"reconstruction {Y[i, j]:g} <= {epsilon_guard:g} at ({i}, {j}) where X > 0"
        )
    if np.any(Xa < 0):
        raise DomainError("divergence requires nonnegative X")
    return float(np.sum(kl_div(Xa, Y)))


class FitEvaluator:
    """Unchecked data-fit term for a fixed ``X``, used inside solver loops.

    For the divergence the ``sum(X log X - X)`` part is computed once, so
    each evaluation needs one log pass over the reconstruction.
    """

    def __init__(self, X, variant):
        self.X = X
        self.variant = variant
        self._buf = np.empty_like(X)
        if variant == "div":
            self._const = float(np.sum(xlogy(X, X)) - np.sum(X))

    def __call__(self, Y):
        buf = self._buf
        if self.variant == "fnorm":
            np.subtract(self.X, Y, out=buf)
            flat = buf.ravel()
            return float(np.dot(flat, flat))
        np.log(Y, out=buf)
        return self._const - float(np.dot(self.X.ravel(), buf.ravel())) + float(Y.sum())


def step_fnorm(X, A, S, epsilon_guard: float = EPS):
    """One Frobenius multiplicative update: ``A`` first, then ``S`` with the new ``A``."""
    validate_dimensions(X, A, S)
    X, A, S = as_array(X), as_array(A), as_array(S)
    A = A * (X @ S.T) / (A @ (S @ S.T) + epsilon_guard)
    np.maximum(A, epsilon_guard, out=A)
    S = S * (A.T @ X) / ((A.T @ A) @ S + epsilon_guard)
    np.maximum(S, epsilon_guard, out=S)
    return A, S


def step_div(X, A, S, epsilon_guard: float = EPS):
    """One divergence multiplicative update, same ordering as :func:`step_fnorm`."""
    validate_dimensions(X, A, S)
    X, A, S = as_array(X), as_array(A), as_array(S)
    ratio = A @ S
    ratio += epsilon_guard
    np.divide(X, ratio, out=ratio)
    A = A * (ratio @ S.T) / (S.sum(axis=1)[None, :] + epsilon_guard)
    np.maximum(A, epsilon_guard, out=A)
    ratio = A @ S
    ratio += epsilon_guard
    np.divide(X, ratio, out=ratio)
    S = S * (A.T @ ratio) / (A.sum(axis=0)[:, None] + epsilon_guard)
    np.maximum(S, epsilon_guard, out=S)
    return A, S


def check_rank(r, n, m):
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise InvalidRank(f"rank must be a positive integer, got {r!r}")
    if r > min(n, m):
        raise RankTooLarge(f"rank {r} exceeds min(n, m) = {min(n, m)}")


def prepare_data(X, epsilon_guard):
    """Copy the cube into a float array with entries floored at ``epsilon_guard``.

    Returns the array and the number of clamped entries (negative noise
    or exact zeros).
    """
    Xa = np.array(as_array(X), dtype=np.float64)
    low = Xa < epsilon_guard
    clamped = int(np.count_nonzero(low))
    if clamped:
        log.info("clamped %d data entries below %g", clamped, epsilon_guard)
        Xa[low] = epsilon_guard
    return Xa, clamped


def _trace_kurtosis(A, eps):
    from .kurtosis import average_excess_kurtosis_or_nan

    return average_excess_kurtosis_or_nan(A, eps)


def solve_baseline(X, r: int, cfg: SolverConfig | None = None, callback=None) -> UnmixResult:
    """Plain Lee-Seung NMF under the same initialization and stopping rule as KbSNMF.

    ``callback(t, A, S)`` is invoked after every full iteration, and once
    with ``t = 0`` for the initial point.
    """
    from .init import initialize

    cfg = cfg or SolverConfig(gamma=0.0, theta=0.0)
    Xa, clamped = prepare_data(X, cfg.epsilon_guard)
    n, m = Xa.shape
    check_rank(r, n, m)
    eps = cfg.epsilon_guard
    A, S = initialize(Xa, r, cfg)
    step = step_fnorm if cfg.variant == "fnorm" else step_div
    fit_of = FitEvaluator(Xa, cfg.variant)

    fit = fit_of(A @ S)
    fits, kurts = [fit], [_trace_kurtosis(A, eps)]
    if callback is not None:
        callback(0, A, S)
    termination = "max_iters"
    t = 0
    for t in range(1, cfg.t_max + 1):
        A, S = step(Xa, A, S, eps)
        fit = fit_of(A @ S)
        fits.append(fit)
        kurts.append(_trace_kurtosis(A, eps))
        if callback is not None:
            callback(t, A, S)
        if t > 1 and relative_change(fits[-2], fits[-1]) < cfg.c_min:
            termination = "tolerance"
            break

    return UnmixResult(
        endmembers=EndmemberMatrix(A),
        abundances=AbundanceMatrix(S),
        objective_trace=list(fits),
        fit_trace=list(fits),
        kurtosis_trace=kurts,
        iterations_run=t,
        termination=termination,
        config=SolverConfig(**{**cfg.to_dict(), "gamma": 0.0, "theta": 0.0}),
        clamped_count=clamped,
        extra={"solver": "baseline"},
    )


def relative_change(prev: float, cur: float) -> float:
    """``|prev - cur| / |prev|``; infinite when ``prev`` is zero and values differ."""
    diff = abs(prev - cur)
    if prev == 0:
        return 0.0 if diff == 0 else float("inf")
    return diff / abs(prev)
