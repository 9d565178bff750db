"""
Matrix Operations Module
Dense real kernels: Hessenberg reduction, Francis double-shift QR,
ordered real Schur form and the Jordan structure of the zero eigenvalue
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from errors import (
    InputValidationError,
    NoConvergenceError,
    NonSquareError,
    SingularMatrixError,
    SwapIllConditionedError,
)

logger = logging.getLogger(__name__)

EPS = float(np.finfo(float).eps)


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """
    Copy input into a finite 2-D float array

    Args:
        A: Nested sequence, scalar or ndarray
        name: Label used in error messages

    Returns:
        New float64 array (scalars become 1x1)
    """
    M = np.array(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise InputValidationError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputValidationError(f"{name} has non-finite entries")
    return M


def require_square(A: np.ndarray, name: str = "matrix") -> int:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquareError(f"{name} must be square, got shape {A.shape}")
    return A.shape[0]


@dataclass(frozen=True)
class SchurFactorization:
    """A = U S U^T with U orthogonal and S quasi-upper-triangular"""
    U: np.ndarray
    S: np.ndarray
    zero_dim: int = 0  # size of the trailing zero-eigenvalue block, set by ordering

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.S @ self.U.T

    def eigenvalues(self) -> List[complex]:
        return eig_block_diag(self.S)


# ---------------------------------------------------------------------------
# Elementary reflections
# ---------------------------------------------------------------------------

def householder_vector(x: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Householder reflector with v[0] = 1 such that (I - beta v v^T) x = mu e1

    Returns:
        (beta, v); beta = 0 when x is already a multiple of e1
    """
    x = np.asarray(x, dtype=float)
    v = x.copy()
    v[0] = 1.0
    sigma = float(x[1:] @ x[1:])
    if sigma == 0.0:
        return 0.0, v
    mu = np.sqrt(x[0] ** 2 + sigma)
    if x[0] <= 0:
        vhead = x[0] - mu
    else:
        vhead = -sigma / (x[0] + mu)
    beta = 2.0 * vhead ** 2 / (sigma + vhead ** 2)
    v[1:] /= vhead
    return float(beta), v


def givens_rotation(f: float, g: float) -> Tuple[float, float]:
    """Cosine and sine with [c s; -s c]^T applied to (f, g) zeroing g"""
    if g == 0.0:
        return 1.0, 0.0
    if f == 0.0:
        return 0.0, float(np.sign(g))
    r = np.copysign(np.hypot(f, g), f)
    return f / r, g / r


def _reflect_rows(M: np.ndarray, rows: slice, cols: slice, beta: float, v: np.ndarray):
    block = M[rows, cols]
    M[rows, cols] = block - beta * np.outer(v, v @ block)


def _reflect_cols(M: np.ndarray, rows: slice, cols: slice, beta: float, v: np.ndarray):
    block = M[rows, cols]
    M[rows, cols] = block - beta * np.outer(block @ v, v)


# ---------------------------------------------------------------------------
# Hessenberg reduction and Francis QR
# ---------------------------------------------------------------------------

def hessenberg(A) -> Tuple[np.ndarray, np.ndarray]:
    """
    Householder reduction to upper-Hessenberg form

    Args:
        A: Square matrix

    Returns:
        (Q, H) with Q^T A Q = H
    """
    H = as_matrix(A)
    n = require_square(H)
    Q = np.eye(n)
    for k in range(n - 2):
        beta, v = householder_vector(H[k + 1:, k])
        if beta == 0.0:
            continue
        _reflect_rows(H, slice(k + 1, n), slice(k, n), beta, v)
        _reflect_cols(H, slice(0, n), slice(k + 1, n), beta, v)
        _reflect_cols(Q, slice(0, n), slice(k + 1, n), beta, v)
        H[k + 2:, k] = 0.0
    return Q, H


def _deflation_point(H: np.ndarray, lo: int, hi: int, tol: float, scale: float) -> int:
    """Largest l in (lo, hi] with a negligible subdiagonal H[l, l-1]; lo if none"""
    for l in range(hi, lo, -1):
        tst = abs(H[l - 1, l - 1]) + abs(H[l, l])
        if tst == 0.0:
            if l - 2 >= lo:
                tst += abs(H[l - 1, l - 2])
            if l + 1 <= hi:
                tst += abs(H[l + 1, l])
        if tst == 0.0:
            tst = scale
        if abs(H[l, l - 1]) <= tol * tst:
            H[l, l - 1] = 0.0
            return l
    return lo


def _francis_step(H: np.ndarray, U: np.ndarray, lo: int, hi: int, exceptional: bool):
    """One implicit double-shift QR sweep on the active window H[lo:hi+1, lo:hi+1]"""
    n = H.shape[0]
    if exceptional:
        s = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2])
        h11 = 0.75 * s + H[hi, hi]
        tr = 2.0 * h11
        det = h11 * h11 + 0.4375 * s * s
        logger.debug("exceptional shift at window [%d, %d]", lo, hi)
    else:
        tr = H[hi - 1, hi - 1] + H[hi, hi]
        det = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]

    x = H[lo, lo] ** 2 + H[lo, lo + 1] * H[lo + 1, lo] - tr * H[lo, lo] + det
    y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - tr)
    z = H[lo + 1, lo] * H[lo + 2, lo + 1]

    for k in range(lo, hi - 1):
        beta, v = householder_vector(np.array([x, y, z]))
        if beta != 0.0:
            rows = slice(k, k + 3)
            _reflect_rows(H, rows, slice(max(lo, k - 1), n), beta, v)
            _reflect_cols(H, slice(0, min(k + 4, hi + 1)), rows, beta, v)
            _reflect_cols(U, slice(0, n), rows, beta, v)
            if k > lo:
                H[k + 1:k + 3, k - 1] = 0.0
        x = H[k + 1, k]
        y = H[k + 2, k]
        if k < hi - 2:
            z = H[k + 3, k]

    beta, v = householder_vector(np.array([x, y]))
    if beta != 0.0:
        rows = slice(hi - 1, hi + 1)
        _reflect_rows(H, rows, slice(hi - 2, n), beta, v)
        _reflect_cols(H, slice(0, hi + 1), rows, beta, v)
        _reflect_cols(U, slice(0, n), rows, beta, v)
        H[hi, hi - 2] = 0.0


def real_schur(A, tol: Optional[float] = None, max_iter: Optional[int] = None) -> SchurFactorization:
    """
    Real Schur form via Hessenberg reduction and Francis double-shift QR

    Args:
        A: Square finite matrix
        tol: Relative deflation tolerance on subdiagonal entries (machine epsilon by default)
        max_iter: Cap on QR sweeps (30 per eigenvalue by default)

    Returns:
        SchurFactorization whose 2x2 diagonal blocks all carry complex pairs
    """
    M = as_matrix(A)
    n = require_square(M)
    if n == 0:
        return SchurFactorization(np.eye(0), np.zeros((0, 0)))

    tol = EPS if tol is None else tol
    max_iter = 30 * n if max_iter is None else max_iter
    scale = max(np.linalg.norm(M), EPS)

    U, H = hessenberg(M)
    hi = n - 1
    since_deflation = 0
    sweeps = 0
    while hi > 0:
        lo = _deflation_point(H, 0, hi, tol, scale)
        if lo >= hi - 1:
            # 1x1 or 2x2 block isolated at the bottom
            hi = lo - 1
            since_deflation = 0
            continue
        sweeps += 1
        since_deflation += 1
        if sweeps > max_iter:
            raise NoConvergenceError(
                f"Francis QR did not converge in {max_iter} sweeps",
                {'active_window': [lo, hi]}
            )
        _francis_step(H, U, lo, hi, exceptional=since_deflation % 10 == 0)

    H[np.tril_indices(n, -2)] = 0.0
    _standardize_blocks(H, U)
    logger.debug("real_schur: n=%d, sweeps=%d", n, sweeps)
    return SchurFactorization(U, H)


# ---------------------------------------------------------------------------
# Diagonal block bookkeeping
# ---------------------------------------------------------------------------

def block_sizes(S: np.ndarray) -> List[int]:
    """Sizes of the diagonal blocks of a quasi-triangular matrix, top to bottom"""
    n = S.shape[0]
    sizes = []
    k = 0
    while k < n:
        if k + 1 < n and S[k + 1, k] != 0.0:
            sizes.append(2)
            k += 2
        else:
            sizes.append(1)
            k += 1
    return sizes


def _block_eigenvalues(B: np.ndarray) -> List[complex]:
    if B.shape[0] == 1:
        return [complex(B[0, 0])]
    half_tr = 0.5 * (B[0, 0] + B[1, 1])
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    disc = half_tr ** 2 - det
    if disc >= 0:
        root = np.sqrt(disc)
        return [complex(half_tr + root), complex(half_tr - root)]
    root = np.sqrt(-disc)
    return [complex(half_tr, root), complex(half_tr, -root)]


def eig_block_diag(S) -> List[complex]:
    """Eigenvalues read off the diagonal blocks of a quasi-triangular matrix"""
    S = np.asarray(S, dtype=float)
    values = []
    k = 0
    for size in block_sizes(S):
        values.extend(_block_eigenvalues(S[k:k + size, k:k + size]))
        k += size
    return values


def _split_real_block(S: np.ndarray, U: np.ndarray, k: int) -> bool:
    """
    Triangularize the 2x2 block at (k, k) when its eigenvalues are real,
    placing the larger magnitude first. Returns True when the block was split.
    """
    a, b = S[k, k], S[k, k + 1]
    c, d = S[k + 1, k], S[k + 1, k + 1]
    half_diff = 0.5 * (a - d)
    disc = half_diff ** 2 + b * c
    if disc < 0:
        return False
    root = np.sqrt(disc)
    lam1 = 0.5 * (a + d) + root
    lam2 = 0.5 * (a + d) - root
    lam = lam1 if abs(lam1) >= abs(lam2) else lam2
    # two eigenvector candidates, keep the better scaled one
    v1 = np.array([b, lam - a])
    v2 = np.array([lam - d, c])
    vec = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        S[k + 1, k] = 0.0
        return True
    cs, sn = vec / norm
    G = np.array([[cs, -sn], [sn, cs]])
    idx = slice(k, k + 2)
    S[idx, :] = G.T @ S[idx, :]
    S[:, idx] = S[:, idx] @ G
    U[:, idx] = U[:, idx] @ G
    S[k + 1, k] = 0.0
    return True


def _standardize_blocks(S: np.ndarray, U: np.ndarray):
    k = 0
    n = S.shape[0]
    while k < n:
        if k + 1 < n and S[k + 1, k] != 0.0:
            _split_real_block(S, U, k)
            k += 2
        else:
            k += 1


# ---------------------------------------------------------------------------
# Reordering
# ---------------------------------------------------------------------------

def _swap_adjacent(U: np.ndarray, S: np.ndarray, start: int, p: int, q: int, scale: float):
    """
    Exchange the p-block at `start` with the following q-block.

    Solves S11 X - X S22 = S12 through its Kronecker form and rotates with
    the orthogonal factor of [-X; I].
    """
    v = slice(start, start + p)
    w = slice(start + p, start + p + q)
    S11, S12, S22 = S[v, v], S[v, w], S[w, w]

    K = np.kron(np.eye(q), S11) - np.kron(S22.T, np.eye(p))
    sv = np.linalg.svd(K, compute_uv=False)
    if sv[-1] <= EPS * max(sv[0], scale):
        raise SwapIllConditionedError(
            "Block exchange Sylvester system is numerically singular",
            {'position': start, 'sizes': [p, q], 'sigma_min': float(sv[-1])}
        )
    x = np.linalg.solve(K, S12.reshape(-1, order='F'))
    X = x.reshape((p, q), order='F')

    Q, _ = np.linalg.qr(np.vstack((-X, np.eye(q))), mode='complete')
    idx = slice(start, start + p + q)
    S[:, idx] = S[:, idx] @ Q
    S[idx, :] = Q.T @ S[idx, :]
    U[:, idx] = U[:, idx] @ Q

    residual = np.linalg.norm(S[start + q:start + p + q, start:start + q])
    if residual > np.sqrt(EPS) * scale:
        raise SwapIllConditionedError(
            "Block exchange left a large off-diagonal residual",
            {'position': start, 'residual': float(residual)}
        )
    if residual > 100 * EPS * scale:
        logger.warning("block swap at %d: residual %.3e", start, residual)
    S[start + q:start + p + q, start:start + q] = 0.0


def order_schur_zeros_last(
    f: SchurFactorization,
    eps_zero: float = 1e-9,
    zero_count: Optional[int] = None
) -> SchurFactorization:
    """
    Sort diagonal blocks by descending eigenvalue magnitude, zero cluster last

    Args:
        f: Real Schur factorization
        eps_zero: Blocks with |lambda| <= eps_zero * ||A||_F form the zero cluster
        zero_count: When given, the zero_count smallest-magnitude eigenvalues
            form the zero cluster instead (rank-based detection)

    Returns:
        Reordered factorization with zero_dim set to the trailing cluster size
    """
    U = f.U.copy()
    S = f.S.copy()
    n = S.shape[0]
    scale = max(np.linalg.norm(S), EPS)

    sizes = block_sizes(S)
    mags = []
    k = 0
    for size in sizes:
        mags.append(max(abs(e) for e in _block_eigenvalues(S[k:k + size, k:k + size])))
        k += size

    if zero_count is None:
        is_zero = [m <= eps_zero * scale for m in mags]
    elif zero_count <= 0:
        is_zero = [False] * len(mags)
    else:
        flat = sorted(m for m, size in zip(mags, sizes) for _ in range(size))
        cutoff = flat[min(zero_count, n) - 1]
        is_zero = [m <= cutoff for m in mags]

    # zero blocks share key 0 so they never move relative to each other
    blocks = [(size, 0.0 if z else m, z) for size, m, z in zip(sizes, mags, is_zero)]

    swaps = 0
    changed = True
    while changed:
        changed = False
        start = 0
        for i in range(len(blocks) - 1):
            p, key_p, _ = blocks[i]
            q, key_q, _ = blocks[i + 1]
            if key_p < key_q:
                _swap_adjacent(U, S, start, p, q, scale)
                blocks[i], blocks[i + 1] = blocks[i + 1], blocks[i]
                swaps += 1
                changed = True
                start += q
            else:
                start += p

    S[np.tril_indices(n, -2)] = 0.0
    pos = 0
    for size, _, _ in blocks:
        if pos > 0:
            S[pos, pos - 1] = 0.0
        pos += size
    _standardize_blocks(S, U)

    zero_dim = sum(size for size, _, z in blocks if z)
    logger.debug("order_schur_zeros_last: %d swaps, zero block of size %d", swaps, zero_dim)
    return SchurFactorization(U, S, zero_dim)


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------

def mat_power(A, k: int) -> np.ndarray:
    M = as_matrix(A)
    require_square(M)
    if k < 0:
        raise InputValidationError(f"power must be non-negative, got {k}")
    return np.linalg.matrix_power(M, k)


def solve(A, B, tol: Optional[float] = None) -> np.ndarray:
    """
    Solve A X = B for nonsingular square A

    Args:
        A: Square matrix
        B: Right-hand side (vector or matrix)
        tol: Relative singular value threshold (n * eps by default)

    Returns:
        X
    """
    M = as_matrix(A)
    n = require_square(M)
    if n == 0:
        return np.array(B, dtype=float)
    sv = np.linalg.svd(M, compute_uv=False)
    tol = n * EPS if tol is None else tol
    if sv[-1] <= tol * sv[0]:
        raise SingularMatrixError(
            "Matrix is numerically singular",
            {'sigma_min': float(sv[-1]), 'sigma_max': float(sv[0])}
        )
    return np.linalg.solve(M, np.asarray(B, dtype=float))


def zero_eigenvalue_structure(A, eps_zero: float = 1e-9) -> List[int]:
    """
    Weyr characteristic of the zero eigenvalue by repeated null-space deflation

    Entry j counts the Jordan cells of size > j. The sum is the algebraic
    multiplicity d2, the length is the largest cell size.
    """
    M = as_matrix(A)
    n = require_square(M)
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return [n] if n else []
    threshold = max(eps_zero * scale, n * EPS * scale)

    weyr = []
    B = M
    while B.shape[0] > 0:
        _, s, Vt = np.linalg.svd(B)
        rank = int(np.sum(s > threshold))
        nullity = B.shape[0] - rank
        if nullity == 0:
            break
        weyr.append(nullity)
        V = Vt.T
        B = (V.T @ B @ V)[:rank, :rank]
    return weyr


def jordan_cells(weyr: List[int]) -> List[Tuple[int, int]]:
    """(cell size, multiplicity) pairs in increasing size, from a Weyr characteristic"""
    cells = []
    padded = list(weyr) + [0]
    for j in range(len(weyr)):
        count = padded[j] - padded[j + 1]
        if count > 0:
            cells.append((j + 1, count))
    return cells
