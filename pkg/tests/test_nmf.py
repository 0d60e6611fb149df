import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbunmix.errors import DomainError, InvalidRank, RankTooLarge
from kbunmix.model import SolverConfig
from kbunmix.nmf import (
    FitEvaluator,
    divergence,
    frobenius_sq,
    relative_change,
    solve_baseline,
    step_div,
    step_fnorm,
)

from conftest import positive_instance


def brute_frobenius(X, A, S):
    n, m = X.shape
    r = A.shape[1]
    total = 0.0
    for i in range(n):
        for j in range(m):
            y = sum(A[i, k] * S[k, j] for k in range(r))
            total += (X[i, j] - y) ** 2
    return total


def brute_divergence(X, A, S):
    n, m = X.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            y = sum(A[i, k] * S[k, j] for k in range(A.shape[1]))
            x = X[i, j]
            total += (x * math.log(x / y) if x > 0 else 0.0) - x + y
    return total


def test_frobenius_matches_double_loop(rng):
    X, A, S = positive_instance(rng, 4, 6, 2)
    assert frobenius_sq(X, A, S) == pytest.approx(brute_frobenius(X, A, S), rel=1e-12)


def test_divergence_matches_double_loop(rng):
    X, A, S = positive_instance(rng, 4, 6, 2)
    X[1, 2] = 0.0
    assert divergence(X, A, S) == pytest.approx(brute_divergence(X, A, S), rel=1e-12)


def test_divergence_domain():
    with pytest.raises(DomainError):
        divergence(np.array([[1.0]]), np.array([[0.0]]), np.array([[1.0]]))
    with pytest.raises(DomainError):
        divergence(np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]))


@pytest.mark.parametrize("variant", ["fnorm", "div"])
def test_fit_evaluator_agrees_with_checked_versions(rng, variant):
    X, A, S = positive_instance(rng, 7, 9, 3)
    ref = frobenius_sq(X, A, S) if variant == "fnorm" else divergence(X, A, S)
    assert FitEvaluator(X, variant)(A @ S) == pytest.approx(ref, rel=1e-12)


def test_fnorm_step_scalar_by_hand():
    # A' = 1 * (4*1) / (1*1*1) = 4 ; S' = 1 * (4*4) / (4*4*1) = 1
    A, S = step_fnorm(np.array([[4.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert A[0, 0] == pytest.approx(4.0, rel=1e-11)
    assert S[0, 0] == pytest.approx(1.0, rel=1e-11)


def test_div_step_scalar_by_hand():
    # X=2, A=1, S=1: A' = 1 * (2/1 * 1) / 1 = 2 ; S' = 1 * (2 * 2/2) / 2 = 1
    A, S = step_div(np.array([[2.0]]), np.array([[1.0]]), np.array([[1.0]]))
    assert A[0, 0] == pytest.approx(2.0, rel=1e-11)
    assert S[0, 0] == pytest.approx(1.0, rel=1e-11)


def test_div_step_two_by_two_by_hand():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    A = np.array([[1.0], [1.0]])
    S = np.array([[1.0, 1.0]])
    # A_i' = A_i * sum_j (X_ij / 1) * S_j / sum_j S_j
    A1 = np.array([[1.5], [3.5]])
    # S_j' = S_j * sum_i A1_i * X_ij / (A1_i S_j) / sum_i A1_i = sum_i X_ij / 5
    S1 = np.array([[4.0 / 5.0, 6.0 / 5.0]])
    A2, S2 = step_div(X, A, S)
    np.testing.assert_allclose(A2, A1, rtol=1e-11)
    np.testing.assert_allclose(S2, S1, rtol=1e-11)


dims = st.tuples(st.integers(1, 8), st.integers(1, 10), st.integers(1, 4))


@settings(max_examples=150, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**32 - 1))
def test_steps_monotone_and_positive(dims, seed):
    n, m, r = dims
    rng = np.random.default_rng(seed)
    X, A, S = positive_instance(rng, n, m, r, 0.01, 2.0)
    f0 = frobenius_sq(X, A, S)
    A1, S1 = step_fnorm(X, A, S)
    assert frobenius_sq(X, A1, S1) <= f0 + 1e-9 * abs(f0)
    assert A1.min() >= 1e-12 and S1.min() >= 1e-12
    d0 = divergence(X, A, S)
    A2, S2 = step_div(X, A, S)
    assert divergence(X, A2, S2) <= d0 + 1e-9 * abs(d0)
    assert A2.min() >= 1e-12 and S2.min() >= 1e-12


@settings(max_examples=60, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**32 - 1))
def test_exact_factorization_is_fixed_point(dims, seed):
    n, m, r = dims
    rng = np.random.default_rng(seed)
    _, A, S = positive_instance(rng, n, m, r)
    X = A @ S
    # the default guard perturbs by eps / denominator; take it out of the picture
    for step in (step_fnorm, step_div):
        A1, S1 = step(X, A, S, epsilon_guard=1e-300)
        np.testing.assert_allclose(A1, A, rtol=1e-12)
        np.testing.assert_allclose(S1, S, rtol=1e-12)


def _separated_rank2():
    # block-disjoint endmembers: a well-posed exact factorization
    rng = np.random.default_rng(2)
    A = np.zeros((20, 2))
    A[:10, 0] = rng.uniform(0.5, 1, 10)
    A[10:, 1] = rng.uniform(0.5, 1, 10)
    S = rng.uniform(0.1, 1, (2, 50))
    return A @ S


@pytest.mark.parametrize("variant", ["fnorm", "div"])
def test_baseline_fits_exact_rank2(variant):
    X = _separated_rank2()
    res = solve_baseline(X, 2, SolverConfig(variant=variant, gamma=0, theta=0, c_min=1e-15))
    assert res.iterations_run <= 1000
    scale = np.sum(X * X) if variant == "fnorm" else X.sum()
    assert res.fit_trace[-1] < 1e-6 * scale
    assert res.fit_trace == res.objective_trace
    assert len(res.fit_trace) == res.iterations_run + 1


def test_baseline_rank_errors(rng):
    X = rng.uniform(size=(4, 5))
    with pytest.raises(InvalidRank):
        solve_baseline(X, 0)
    with pytest.raises(RankTooLarge):
        solve_baseline(X, 5)


def test_baseline_termination_sound(rng):
    X = rng.uniform(0.1, 1, (10, 30))
    res = solve_baseline(X, 3, SolverConfig(gamma=0, theta=0, c_min=1e-3))
    assert res.termination == "tolerance"
    assert relative_change(res.fit_trace[-2], res.fit_trace[-1]) < 1e-3
    res = solve_baseline(X, 3, SolverConfig(gamma=0, theta=0, t_max=7, c_min=1e-300))
    assert res.termination == "max_iters" and res.iterations_run == 7


def test_relative_change():
    assert relative_change(10.0, 9.0) == pytest.approx(0.1)
    assert relative_change(-10.0, -11.0) == pytest.approx(0.1)
    assert relative_change(0.0, 0.0) == 0.0
    assert relative_change(0.0, 1.0) == math.inf
