"""Factor initialization: NNDSVD and a seeded uniform fallback."""

from __future__ import annotations

import numpy as np

from .errors import InvalidRank, RankTooLarge, SvdFailure
from .model import SolverConfig, as_array


def _split_sections(x, y):
    """Keep the dominant nonnegative section pair of a singular vector pair."""
    xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
    yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
    nxp, nyp = np.linalg.norm(xp), np.linalg.norm(yp)
    nxn, nyn = np.linalg.norm(xn), np.linalg.norm(yn)
    mp, mn = nxp * nyp, nxn * nyn
    if mp >= mn:
        u, v, sigma, nu, nv = xp, yp, mp, nxp, nyp
    else:
        u, v, sigma, nu, nv = xn, yn, mn, nxn, nyn
    if sigma == 0:
        return np.zeros_like(x), np.zeros_like(y), 0.0
    return u / nu, v / nv, sigma


def nndsvd(X, r: int, fill: str = "mean", seed: int = 0):
    """Nonnegative double SVD initialization (Boutsidis & Gallopoulos, 2008).

    Parameters
    ----------
    X : array_like or SpectralCube
        Nonnegative ``n x m`` data.
    r : int
        Number of components.
    fill : {"mean", "zeros", "random"}
        What replaces exact zeros in the factors: ``mean(X) / 100``,
        nothing, or uniform noise on ``(0, mean(X) / 100)``.
    seed : int
        Only used by ``fill="random"``.

    Returns
    -------
    A0 : ndarray, shape (n, r)
    S0 : ndarray, shape (r, m)
    """
    X = as_array(X)
    n, m = X.shape
    if not isinstance(r, (int, np.integer)) or r < 1:
        raise InvalidRank(f"rank must be a positive integer, got {r!r}")
    if r > min(n, m):
        raise RankTooLarge(f"rank {r} exceeds min(n, m) = {min(n, m)}")
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc
    U, s, Vt = U[:, :r], s[:r], Vt[:r]

    # fix the sign ambiguity: largest-magnitude entry of each u_k positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(r)])
    signs[signs == 0] = 1.0
    U = U * signs
    Vt = Vt * signs[:, None]

    A = np.zeros((n, r))
    S = np.zeros((r, m))
    A[:, 0] = np.sqrt(s[0]) * np.abs(U[:, 0])
    S[0] = np.sqrt(s[0]) * np.abs(Vt[0])
    for k in range(1, r):
        u, v, sigma = _split_sections(U[:, k], Vt[k])
        scale = np.sqrt(s[k] * sigma)
        A[:, k] = scale * u
        S[k] = scale * v

    if fill != "zeros":
        avg = X.mean()
        if fill == "mean":
            A[A == 0] = avg / 100
            S[S == 0] = avg / 100
        elif fill == "random":
            rng = np.random.default_rng(seed)
            za, zs = A == 0, S == 0
            A[za] = rng.uniform(0, avg / 100, np.count_nonzero(za))
            S[zs] = rng.uniform(0, avg / 100, np.count_nonzero(zs))
        else:
            raise ValueError(f"unknown fill {fill!r}")
    return A, S


def random_init(n: int, m: int, r: int, seed: int = 0):
    """Uniform factors on ``[0.1, 1.0)`` from a seeded generator."""
    if r < 1:
        raise InvalidRank(f"rank must be positive, got {r}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.1, 1.0, size=(n, r))
    S = rng.uniform(0.1, 1.0, size=(r, m))
    return A, S


def initialize(X, r: int, cfg: SolverConfig):
    """Initial ``(A, S)`` per ``cfg.init``, floored at ``cfg.epsilon_guard``."""
    X = as_array(X)
    if cfg.init == "nndsvd":
        A, S = nndsvd(X, r, fill=cfg.nndsvd_fill, seed=cfg.seed)
    else:
        n, m = X.shape
        if r > min(n, m):
            raise RankTooLarge(f"rank {r} exceeds min(n, m) = {min(n, m)}")
        A, S = random_init(n, m, r, cfg.seed)
    return np.maximum(A, cfg.epsilon_guard), np.maximum(S, cfg.epsilon_guard)
