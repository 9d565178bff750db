"""
Tests for the dense kernels: Hessenberg, Francis QR, ordered Schur form,
zero-eigenvalue structure
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import schur as scipy_schur

from conftest import A6, B6, K6, nilpotent
from errors import InputValidationError, NonSquareError, SingularMatrixError
from matops import (
    as_matrix,
    block_sizes,
    eig_block_diag,
    givens_rotation,
    hessenberg,
    householder_vector,
    jordan_cells,
    mat_power,
    order_schur_zeros_last,
    real_schur,
    solve,
    zero_eigenvalue_structure,
)


def matched(values, reference, tol):
    """True when two eigenvalue multisets agree within tol"""
    remaining = list(reference)
    for v in values:
        dist = [abs(v - r) for r in remaining]
        i = int(np.argmin(dist))
        if dist[i] > tol:
            return False
        remaining.pop(i)
    return not remaining


def check_factorization(f, A):
    n = A.shape[0]
    assert np.linalg.norm(f.U.T @ f.U - np.eye(n)) <= 1e-10
    assert np.linalg.norm(f.reconstruct() - A) <= 1e-9 * max(np.linalg.norm(A), 1e-300)
    assert np.all(np.tril(f.S, -2) == 0.0)
    k = 0
    for size in block_sizes(f.S):
        if size == 2:
            ev = np.linalg.eigvals(f.S[k:k + 2, k:k + 2])
            assert abs(ev[0].imag) > 0
        k += size


# ---------------------------------------------------------------------------
# Elementary pieces
# ---------------------------------------------------------------------------

def test_householder_zeroes_tail():
    """Test that the reflector maps x onto a multiple of e1"""
    x = np.array([3.0, 1.0, -2.0, 0.5])
    beta, v = householder_vector(x)
    H = np.eye(4) - beta * np.outer(v, v)
    y = H @ x
    assert np.allclose(y[1:], 0.0, atol=1e-14)
    assert abs(abs(y[0]) - np.linalg.norm(x)) < 1e-14
    assert np.allclose(H @ H.T, np.eye(4))


def test_householder_on_e1_is_identity():
    beta, _ = householder_vector(np.array([2.0, 0.0, 0.0]))
    assert beta == 0.0


def test_givens_rotation_annihilates():
    c, s = givens_rotation(3.0, 4.0)
    r = np.array([[c, s], [-s, c]]) @ np.array([3.0, 4.0])
    assert abs(c * c + s * s - 1.0) < 1e-15
    assert abs(r[1]) < 1e-12
    assert abs(abs(r[0]) - 5.0) < 1e-12


def test_as_matrix_rejects_bad_input():
    with pytest.raises(InputValidationError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(InputValidationError):
        as_matrix(np.zeros((2, 2, 2)))
    assert as_matrix(3.0).shape == (1, 1)


# ---------------------------------------------------------------------------
# Hessenberg
# ---------------------------------------------------------------------------

def test_hessenberg_identity():
    Q, H = hessenberg(np.eye(3))
    assert np.allclose(Q, np.eye(3))
    assert np.allclose(H, np.eye(3))


def test_hessenberg_fixed_point():
    """Test that an upper-Hessenberg input is left in place"""
    A = np.triu(np.arange(1.0, 17.0).reshape(4, 4), -1)
    Q, H = hessenberg(A)
    assert np.array_equal(Q, np.eye(4))
    assert np.array_equal(H, A)


def test_hessenberg_random():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((5, 5))
    Q, H = hessenberg(A)
    assert np.linalg.norm(Q.T @ A @ Q - H) <= 1e-10 * np.linalg.norm(A)
    assert np.all(np.tril(H, -2) == 0.0)
    assert np.linalg.norm(Q.T @ Q - np.eye(5)) <= 1e-12


def test_hessenberg_non_square():
    with pytest.raises(NonSquareError):
        hessenberg(np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# Real Schur
# ---------------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 12))
def test_real_schur_invariants(seed, n):
    """Test orthogonality, reconstruction and eigenvalues on random matrices"""
    A = np.random.default_rng(seed).standard_normal((n, n))
    f = real_schur(A)
    check_factorization(f, A)
    assert matched(f.eigenvalues(), np.linalg.eigvals(A), 1e-8 * max(1.0, np.linalg.norm(A)))


def test_real_schur_rotation_block():
    f = real_schur(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert block_sizes(f.S) == [2]
    assert matched(f.eigenvalues(), [1j, -1j], 1e-12)


def test_real_schur_diagonal():
    A = np.diag([3.0, -1.0, 2.0])
    f = real_schur(A)
    check_factorization(f, A)
    assert np.allclose(np.abs(f.U) @ np.ones(3), np.ones(3))
    assert sorted(np.diag(f.S)) == sorted(np.diag(A))


def test_real_schur_six_state_eigenvalues():
    A = A6 + B6 @ K6
    f = real_schur(A)
    check_factorization(f, A)
    ev = sorted(f.eigenvalues(), key=lambda z: -abs(z))
    assert np.allclose([ev[0].real, ev[1].real, ev[2].real], [0.7, 0.5, 0.2], atol=1e-6)
    assert all(abs(z) < 1e-4 for z in ev[3:])


def test_real_schur_agrees_with_scipy_spectrum():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((7, 7))
    T, _ = scipy_schur(A, output="real")
    assert matched(real_schur(A).eigenvalues(), eig_block_diag(T), 1e-9)


# ---------------------------------------------------------------------------
# Ordering
# ---------------------------------------------------------------------------

def test_order_interleaved_zeros():
    """Test that {0, 0.9, 0, 0.3} is reordered to {0.9, 0.3, 0, 0}"""
    rng = np.random.default_rng(3)
    S = np.diag([0.0, 0.9, 0.0, 0.3]) + np.triu(rng.standard_normal((4, 4)), 1)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    A = Q @ S @ Q.T
    f = order_schur_zeros_last(real_schur(A), zero_count=sum(zero_eigenvalue_structure(A)))
    check_factorization(f, A)
    d = np.diag(f.S)
    assert np.allclose(d[:2], [0.9, 0.3], atol=1e-8)
    assert np.all(np.abs(np.linalg.eigvals(f.S[2:, 2:])) < 1e-6)
    assert f.zero_dim == 2


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 9))
def test_ordering_preserves_spectrum(seed, n):
    """Test that reordering keeps the eigenvalue multiset and sorts magnitudes"""
    A = np.random.default_rng(seed).standard_normal((n, n))
    f0 = real_schur(A)
    f = order_schur_zeros_last(f0)
    check_factorization(f, A)
    assert matched(f.eigenvalues(), f0.eigenvalues(), 1e-8 * max(1.0, np.linalg.norm(A)))
    mags = [abs(z) for z in f.eigenvalues()]
    assert all(a >= b - 1e-8 for a, b in zip(mags, mags[1:]))


def test_ordering_already_sorted():
    S = np.array([[0.8, 1.0, 0.3], [0.0, 0.4, -0.2], [0.0, 0.0, 0.0]])
    f = order_schur_zeros_last(real_schur(S))
    assert np.allclose(np.abs(np.diag(f.S)), [0.8, 0.4, 0.0], atol=1e-12)
    check_factorization(f, S)


def test_six_state_trailing_block_nilpotent():
    A = A6 + B6 @ K6
    weyr = zero_eigenvalue_structure(A)
    d2 = sum(weyr)
    f = order_schur_zeros_last(real_schur(A), zero_count=d2)
    assert f.zero_dim == 3
    S22 = f.S[3:, 3:]
    assert np.linalg.norm(np.linalg.matrix_power(S22, d2)) <= 1e-8 * np.linalg.norm(A)
    assert np.allclose(np.diag(f.S)[:3], [0.7, 0.5, 0.2], atol=1e-6)


# ---------------------------------------------------------------------------
# Zero eigenvalue structure
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("cells,expected", [
    ([1], [1]),
    ([2], [1, 1]),
    ([1, 2], [2, 1]),
    ([3, 1, 1], [3, 1, 1]),
    ([2, 2], [2, 2]),
])
def test_weyr_of_constructed_nilpotents(cells, expected):
    rng = np.random.default_rng(sum(cells))
    d2 = sum(cells)
    S = np.zeros((d2 + 2, d2 + 2))
    S[:2, :2] = [[0.6, 0.3], [0.0, -0.4]]
    S[2:, 2:] = nilpotent(cells)
    S[:2, 2:] = rng.standard_normal((2, d2))
    Q, _ = np.linalg.qr(rng.standard_normal((d2 + 2, d2 + 2)))
    weyr = zero_eigenvalue_structure(Q @ S @ Q.T)
    assert weyr == expected
    assert sorted(size for size, count in jordan_cells(weyr) for _ in range(count)) == sorted(cells)


def test_six_state_jordan_cells():
    weyr = zero_eigenvalue_structure(A6 + B6 @ K6)
    assert weyr == [2, 1]
    assert jordan_cells(weyr) == [(1, 1), (2, 1)]


def test_invertible_has_no_zero_structure():
    assert zero_eigenvalue_structure(np.diag([0.5, -2.0, 3.0])) == []


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def test_mat_power_and_solve():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    assert np.allclose(mat_power(A, 0), np.eye(2))
    assert np.allclose(mat_power(A, 3), A @ A @ A)
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(solve(np.eye(2), B), B)
    X = solve(A, B)
    assert np.linalg.norm(A @ X - B) <= 1e-12 * np.linalg.norm(B)


def test_solve_singular():
    with pytest.raises(SingularMatrixError):
        solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.eye(2))
