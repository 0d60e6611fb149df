"""Kurtosis-based smooth NMF (KbSNMF).

The solver minimizes ``fit(X, A M S) - gamma * Kbar(A)`` where ``fit`` is
either the squared Frobenius norm or the generalized KL divergence, ``M``
is the smoothing matrix and ``Kbar`` the average kurtosis of the columns
of ``A``.  Updates are multiplicative; the kurtosis term enters the
``A`` denominator with a negative weight ``gamma' = -2 gamma / (n r)``,
so that denominator is floored at ``epsilon_guard`` and the number of
floored entries is reported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignal, InvalidTheta
from .init import initialize
from .kurtosis import average_excess_kurtosis_or_nan, kurtosis_direction
from .model import (
    AbundanceMatrix,
    EndmemberMatrix,
    SolverConfig,
    UnmixResult,
    as_array,
    validate_dimensions,
)
from .nmf import FitEvaluator, check_rank, prepare_data, relative_change

log = logging.getLogger(__name__)

EPS = 1e-12


@dataclass(frozen=True, eq=False)
class SmoothingMatrix:
    data: np.ndarray
    theta: float

    @property
    def is_identity(self) -> bool:
        return self.theta == 0.0


def smoothing_matrix(r: int, theta: float) -> SmoothingMatrix:
    """``(1 - theta) I + (theta / r) 1 1^T``; the identity when ``theta == 0``."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise InvalidTheta(f"theta must lie in [0, 1], got {theta}")
    M = np.full((r, r), theta / r)
    M[np.diag_indices(r)] += 1.0 - theta
    M.flags.writeable = False
    return SmoothingMatrix(M, theta)


def gamma_prime(gamma: float, n: int, r: int) -> float:
    return -2.0 * gamma / (n * r)


def _guarded(den, eps):
    # den + eps is the plain Lee-Seung guard; the outer floor only binds
    # where the kurtosis term drove the denominator negative
    g = den + eps
    floored = int(np.count_nonzero(g < eps))
    if floored:
        np.maximum(g, eps, out=g)
    return g, floored


class _Updater:
    """Multiplicative half-steps for one ``X`` with reusable ``n x m`` buffers."""

    def __init__(self, X, M, gp, variant, eps):
        X = np.ascontiguousarray(X, dtype=np.float64)
        self.X = X
        M = np.asarray(getattr(M, "data", M), dtype=np.float64)
        self.M = M
        self.identity = bool(np.array_equal(M, np.eye(M.shape[0])))
        self.gp = float(gp)
        self.variant = variant
        self.eps = eps
        self.Y = np.empty_like(X)
        self.R = np.empty_like(X) if variant == "div" else None
        self.y_valid = False
        self.fit_of = FitEvaluator(X, variant)

    def smooth(self, S):
        return S if self.identity else self.M @ S

    def mix(self, A):
        return A if self.identity else A @ self.M

    def _ratio(self, B, C, reuse=False):
        # X / (B @ C + eps) into R
        if not reuse:
            np.matmul(B, C, out=self.Y)
        R = self.R
        np.add(self.Y, self.eps, out=R)
        np.divide(self.X, R, out=R)
        return R

    def update_A(self, A, S):
        MS = self.smooth(S)
        if self.variant == "fnorm":
            num = self.X @ MS.T
            den = A @ (MS @ MS.T)
        else:
            num = self._ratio(A, MS, reuse=self.y_valid) @ MS.T
            den = np.broadcast_to(MS.sum(axis=1)[None, :], A.shape)
        self.y_valid = False
        if self.gp != 0.0:
            den = den + self.gp * kurtosis_direction(A)
        den, floored = _guarded(den, self.eps)
        A = A * num / den
        np.maximum(A, self.eps, out=A)
        return A, floored

    def update_S(self, A, S):
        AM = self.mix(A)
        eps = self.eps
        if self.variant == "fnorm":
            S = S * (AM.T @ self.X) / ((AM.T @ AM) @ S + eps)
        else:
            S = S * (AM.T @ self._ratio(AM, S)) / (AM.sum(axis=0)[:, None] + eps)
        self.y_valid = False
        np.maximum(S, eps, out=S)
        return S

    def fit(self, A, S):
        """Fit of ``A M S``; leaves the reconstruction cached for the next A-update."""
        np.matmul(A, self.smooth(S), out=self.Y)
        self.y_valid = True
        return self.fit_of(self.Y)


def _step(X, A, S, M, gp, variant, eps, return_floored):
    validate_dimensions(X, A, S)
    X, A, S = as_array(X), as_array(A), as_array(S)
    u = _Updater(X, M, gp, variant, eps)
    A, floored = u.update_A(A, S)
    S = u.update_S(A, S)
    return (A, S, floored) if return_floored else (A, S)


def step_kbsnmf_fnorm(X, A, S, M, gamma_prime, epsilon_guard=EPS, return_floored=False):
    """One KbSNMF-fnorm iteration without normalization: ``A`` then ``S``.

    With ``return_floored`` the count of floored ``A`` denominators is
    returned as a third element.
    """
    return _step(X, A, S, M, gamma_prime, "fnorm", epsilon_guard, return_floored)


def step_kbsnmf_div(X, A, S, M, gamma_prime, epsilon_guard=EPS, return_floored=False):
    """Divergence counterpart of :func:`step_kbsnmf_fnorm`."""
    return _step(X, A, S, M, gamma_prime, "div", epsilon_guard, return_floored)


def normalize_endmembers(A, S, compensate=True, divisor="std", epsilon_guard=EPS,
                         return_scales=False):
    """Scale each endmember column to unit population variance.

    With ``compensate`` the matching abundance row is multiplied by the
    same factor so ``A @ S`` is unchanged.  ``divisor="variance"`` divides
    by the variance instead of the standard deviation.
    """
    A, S = as_array(A), as_array(S)
    var = A.var(axis=0)
    low = np.flatnonzero(var <= epsilon_guard)
    if low.size:
        i = int(low[0])
        raise DegenerateSignal(f"endmember column {i} has variance {var[i]:g}", column=i)
    d = np.sqrt(var) if divisor == "std" else var
    A = A / d
    if compensate:
        S = S * d[:, None]
    return (A, S, d) if return_scales else (A, S)


def objective(X, A, S, M, gamma, variant, epsilon_guard=EPS) -> float:
    """``fit(X, A M S) - gamma * Kbar(A)`` for ``variant`` in ``{"fnorm", "div"}``."""
    from .kurtosis import average_kurtosis
    from .nmf import divergence, frobenius_sq

    validate_dimensions(X, A, S)
    M = getattr(M, "data", M)
    MS = M @ as_array(S)
    if variant == "fnorm":
        fit = frobenius_sq(X, A, MS)
    elif variant == "div":
        fit = divergence(X, A, MS, epsilon_guard)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if gamma == 0:
        return fit
    return fit - gamma * average_kurtosis(A, epsilon_guard).average


def solve(X, r: int, cfg: SolverConfig | None = None, callback=None, init=None) -> UnmixResult:
    """Run KbSNMF from initialization to termination.

    Parameters
    ----------
    X : SpectralCube or array_like
        ``n x m`` data; entries below ``epsilon_guard`` are clamped up.
    r : int
        Number of endmembers.
    cfg : SolverConfig
        Variant, trade-off ``gamma``, smoothing ``theta`` and stopping rule.
    callback : callable, optional
        ``callback(t, A, S)`` after the initial normalization (``t = 0``)
        and after every iteration.
    init : tuple of ndarray, optional
        Explicit ``(A0, S0)``; overrides ``cfg.init``.

    Returns
    -------
    UnmixResult
    """
    cfg = cfg or SolverConfig()
    eps = cfg.epsilon_guard
    Xa, clamped = prepare_data(X, eps)
    n, m = Xa.shape
    check_rank(r, n, m)
    if init is None:
        A, S = initialize(Xa, r, cfg)
    else:
        A = np.maximum(np.array(init[0], dtype=np.float64), eps)
        S = np.maximum(np.array(init[1], dtype=np.float64), eps)
        validate_dimensions(Xa, A, S)

    M = smoothing_matrix(r, cfg.theta)
    gp = gamma_prime(cfg.gamma, n, r)
    variant, gamma = cfg.variant, cfg.gamma

    def normalize(A, S):
        A, S = normalize_endmembers(A, S, cfg.compensate_normalization,
                                    cfg.normalize_divisor, eps)
        # dividing by a std above one can push floored entries under eps
        return np.maximum(A, eps), np.maximum(S, eps)

    upd = _Updater(Xa, M, gp, variant, eps)

    def evaluate(A, S):
        fit = upd.fit(A, S)
        kurt = average_excess_kurtosis_or_nan(A, eps)
        obj = fit if gamma == 0 else fit - gamma * (kurt + 3.0)
        return obj, fit, kurt

    if cfg.normalizes:
        A, S = normalize(A, S)
    obj, fit, kurt = evaluate(A, S)
    objs, fits, kurts = [obj], [fit], [kurt]
    watched = objs if cfg.stop_on == "objective" else fits
    if callback is not None:
        callback(0, A, S)

    floored_total = 0
    termination = "max_iters"
    t = 0
    for t in range(1, cfg.t_max + 1):
        A, floored = upd.update_A(A, S)
        floored_total += floored
        if cfg.normalizes:
            A, S = normalize(A, S)
        S = upd.update_S(A, S)
        obj, fit, kurt = evaluate(A, S)
        objs.append(obj)
        fits.append(fit)
        kurts.append(kurt)
        if callback is not None:
            callback(t, A, S)
        if not np.isfinite(obj):
            log.warning("non-finite objective at iteration %d", t)
        # C(1) is treated as infinite: never stop on the first iteration
        if t > 1 and relative_change(watched[-2], watched[-1]) < cfg.c_min:
            termination = "tolerance"
            break

    if floored_total:
        log.info("floored %d A-update denominators over %d iterations", floored_total, t)
    return UnmixResult(
        endmembers=EndmemberMatrix(A),
        abundances=AbundanceMatrix(S),
        objective_trace=objs,
        fit_trace=fits,
        kurtosis_trace=kurts,
        iterations_run=t,
        termination=termination,
        config=cfg,
        floored_count=floored_total,
        clamped_count=clamped,
        degenerate_kurtosis=bool(np.any(np.isnan(kurts))),
        extra={"solver": "kbsnmf", "gamma_prime": gp},
    )


def rescale_for_plotting(A, X) -> np.ndarray:
    """Scale each endmember to the peak reflectance of its closest-angle pixel."""
    A, X = as_array(A), as_array(X)
    An = A / np.linalg.norm(A, axis=0)
    Xn = X / np.maximum(np.linalg.norm(X, axis=0), EPS)
    best = np.argmax(An.T @ Xn, axis=1)
    peaks = X[:, best].max(axis=0)
    return A * (peaks / A.max(axis=0))
