"""
Synthesis Module
Static state-feedback gains from the discrete-time algebraic Riccati equation
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import DimensionMismatchError, InvalidParamsError, NoConvergenceError, UnstabilizableError
from matops import as_matrix, require_square

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DareSpec:
    """
    Weights and stopping rule of the Riccati iteration

    Q is n x n symmetric positive semidefinite, R is m x m symmetric positive
    definite. The iteration stops once the Frobenius change of P between
    two sweeps is at most tol * max(1, ||P||_F).
    """
    Q: np.ndarray
    R: np.ndarray
    max_iter: int = 10000
    tol: float = 1e-10

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        require_square(Q, "Q")
        require_square(R, "R")
        if self.max_iter < 1 or self.tol <= 0:
            raise InvalidParamsError("max_iter must be >= 1 and tol > 0")
        for name, W in (("Q", Q), ("R", R)):
            if np.linalg.norm(W - W.T) > self.tol * max(1.0, np.linalg.norm(W)):
                raise InvalidParamsError(f"{name} is not symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise InvalidParamsError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(Q)) < -self.tol * max(1.0, np.linalg.norm(Q)):
            raise InvalidParamsError("Q must be positive semidefinite")
        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'R', R)

    @classmethod
    def scalar(cls, n: int, m: int, q: float = 1.0, r: float = 1.0, **kwargs) -> "DareSpec":
        """Weights q I_n and r I_m"""
        return cls(q * np.eye(n), r * np.eye(m), **kwargs)


def _gain(A: np.ndarray, B: np.ndarray, R: np.ndarray, P: np.ndarray) -> np.ndarray:
    """K = -(R + B^T P B)^{-1} B^T P A"""
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def riccati_update(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray) -> np.ndarray:
    """One backward sweep A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q"""
    PB = P @ B
    return A.T @ P @ A - A.T @ PB @ np.linalg.solve(R + B.T @ PB, PB.T @ A) + Q


def riccati_residual(A, B, Q, R, P) -> float:
    """Frobenius norm of the Riccati equation residual at P"""
    A, B, Q, R, P = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R, P))
    return float(np.linalg.norm(riccati_update(A, B, Q, R, P) - P))


def dare_gain(A, B, spec: DareSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Riccati fixed point from P_0 = Q and the matching optimal gain

    Args:
        A: State matrix (n x n)
        B: Input matrix (n x m)
        spec: Weights and stopping rule

    Returns:
        (K, P) with u = K x stabilizing A + B K
    """
    A = as_matrix(A, "A")
    n = require_square(A, "A")
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    if spec.Q.shape != (n, n) or spec.R.shape != (m, m):
        raise DimensionMismatchError(
            f"weights have shapes {spec.Q.shape} and {spec.R.shape}, system has n={n}, m={m}"
        )

    P = spec.Q.copy()
    for it in range(1, spec.max_iter + 1):
        P_next = riccati_update(A, B, spec.Q, spec.R, P)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise NoConvergenceError("Riccati iteration diverged", {'iterations': it})
        step = np.linalg.norm(P_next - P)
        P = P_next
        if step <= spec.tol * max(1.0, np.linalg.norm(P)):
            logger.info("dare_gain: converged in %d sweeps", it)
            break
    else:
        raise NoConvergenceError(
            f"Riccati iteration did not converge in {spec.max_iter} sweeps",
            {'last_step': float(step)}
        )

    K = _gain(A, B, spec.R, P) if m else np.zeros((0, n))
    rho = float(np.max(np.abs(np.linalg.eigvals(A + B @ K))))
    if rho >= 1.0 + spec.tol:
        raise UnstabilizableError(f"closed loop spectral radius {rho:.6g} after convergence", {'rho': rho})
    logger.debug("dare_gain: spectral radius %.6g, residual %.3g", rho, riccati_residual(A, B, spec.Q, spec.R, P))
    return K, P
