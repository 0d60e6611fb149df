import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbunmix.errors import DegenerateSignal
from kbunmix.kurtosis import (
    average_excess_kurtosis_or_nan,
    average_fourth_moment,
    average_kurtosis,
    centering_matrix,
    column_kurtosis,
    grad_average_kurtosis,
    kurtosis,
    kurtosis_direction,
)


def unit_variance(rng, n, r):
    A = rng.standard_normal((n, r))
    return (A - A.mean(0)) / A.std(0) + 2.0


def fd_grad(f, A, h=1e-5):
    G = np.zeros_like(A)
    for idx in np.ndindex(*A.shape):
        E = np.zeros_like(A)
        E[idx] = h
        G[idx] = (f(A + E) - f(A - E)) / (2 * h)
    return G


def true_average_kurtosis(A):
    return average_kurtosis(A).average


def test_spike_kurtosis_by_hand():
    # mean 1/4; m2 = 0.1875, m4 = 0.08203125
    assert kurtosis([0, 0, 0, 1]) == pytest.approx(0.08203125 / 0.1875**2, rel=1e-14)
    assert kurtosis([0, 0, 0, 1]) == pytest.approx(7 / 3, rel=1e-14)


def test_constant_is_degenerate():
    with pytest.raises(DegenerateSignal):
        kurtosis([2.0, 2.0, 2.0, 2.0])
    with pytest.raises(DegenerateSignal) as e:
        column_kurtosis(np.array([[1.0, 3.0], [2.0, 3.0], [0.0, 3.0]]))
    assert e.value.column == 1
    assert np.isnan(average_excess_kurtosis_or_nan(np.ones((4, 2))))


def test_gaussian_kurtosis_is_three():
    y = np.random.default_rng(7).standard_normal(10**6)
    assert abs(kurtosis(y) - 3.0) < 0.05


def test_average_of_permuted_spikes():
    A = np.array([[0, 1], [0, 0], [0, 0], [1, 0]], dtype=float)
    rep = average_kurtosis(A)
    assert rep.average == pytest.approx(7 / 3)
    assert rep.average_excess == pytest.approx(7 / 3 - 3)
    assert rep.per_endmember == pytest.approx((7 / 3, 7 / 3))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3), shift=st.floats(-1e3, 1e3))
def test_kurtosis_affine_invariant(seed, scale, shift):
    y = np.random.default_rng(seed).uniform(size=12)
    assert kurtosis(scale * y + shift) == pytest.approx(kurtosis(y), rel=1e-7)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 40))
def test_kurtosis_bounds(seed, n):
    y = np.random.default_rng(seed).standard_normal(n)
    k = kurtosis(y)
    # Pearson: K >= 1 ; population sample bound K <= n
    assert 1.0 - 1e-12 <= k <= n + 1e-9


def test_centering_matrix():
    N = centering_matrix(5)
    np.testing.assert_allclose(N, N.T)
    np.testing.assert_allclose(N @ N, N, atol=1e-15)
    np.testing.assert_allclose(N @ np.ones(5), 0, atol=1e-15)


def test_direction_matches_explicit_matrix(rng):
    A = rng.uniform(size=(7, 3))
    N = centering_matrix(7)
    np.testing.assert_allclose(kurtosis_direction(A), N @ (N @ A) ** 3, atol=1e-14)


def test_gradient_is_exact_for_fourth_moment(rng):
    for _ in range(100):
        A = unit_variance(rng, 5, 3)
        G = grad_average_kurtosis(A, check_unit_variance=True)
        F = fd_grad(average_fourth_moment, A)
        assert np.max(np.abs(G - F)) / np.max(np.abs(F)) < 1e-5


def test_gradient_matches_kurtosis_only_at_unit_variance(rng):
    # the formula differentiates the fourth moment and ignores the variance
    A = unit_variance(rng, 6, 2)
    A[:, 0] = 2.0 * A[:, 0]
    G = grad_average_kurtosis(A)
    F = fd_grad(true_average_kurtosis, A)
    assert np.max(np.abs(G - F)) / np.max(np.abs(F)) > 0.1


def test_gradient_ascends_kurtosis_at_unit_variance(rng):
    # a small step along the fourth-moment gradient raises the true kurtosis
    for _ in range(20):
        A = unit_variance(rng, 30, 3)
        G = grad_average_kurtosis(A)
        k0 = average_kurtosis(A).average
        assert average_kurtosis(A + 1e-3 * G / np.abs(G).max()).average > k0


def test_check_unit_variance_flag(rng):
    with pytest.raises(ValueError):
        grad_average_kurtosis(3.0 * unit_variance(rng, 5, 2), check_unit_variance=True)
