"""
Polyhedron Set Module
H-representation sets {x : F x <= theta}: constraint tightening,
intersection, linear preimage, redundancy removal and containment
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from errors import DimensionMismatchError, DimensionTooHighError, EmptySetError, UnboundedSetError
from lpcore import LinearProgram, LPStatus, lp_solve, support_hpoly

logger = logging.getLogger(__name__)

ZERO_ROW_TOL = 1e-12
PARALLEL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HPolyhedron:
    """
    Half-space set {x : F x <= theta}

    Zero rows are normalized at construction: dropped when theta_i >= 0,
    otherwise the set is flagged empty.
    """
    F: np.ndarray
    theta: np.ndarray
    empty: bool = field(default=False)

    def __post_init__(self):
        F = np.array(self.F, dtype=float)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if F.ndim == 1:
            F = F.reshape(1, -1)
        if F.shape[0] != theta.shape[0]:
            raise DimensionMismatchError(f"F has {F.shape[0]} rows, theta has {theta.shape[0]} entries")
        norms = np.linalg.norm(F, axis=1)
        zero = norms <= ZERO_ROW_TOL * np.maximum(1.0, np.abs(theta))
        empty = self.empty or bool(np.any(theta[zero] < 0))
        object.__setattr__(self, 'F', F[~zero])
        object.__setattr__(self, 'theta', theta[~zero])
        object.__setattr__(self, 'empty', empty)

    @property
    def dim(self) -> int:
        return self.F.shape[1]

    @property
    def rows(self) -> int:
        return self.F.shape[0]

    @classmethod
    def box(cls, radii, center=None) -> "HPolyhedron":
        """Axis-aligned box |x_i - center_i| <= radii_i"""
        radii = np.asarray(radii, dtype=float).reshape(-1)
        n = radii.shape[0]
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(-1)
        I = np.eye(n)
        return cls(np.vstack((I, -I)), np.concatenate((radii + center, radii - center)))

    @classmethod
    def full(cls, n: int) -> "HPolyhedron":
        return cls(np.zeros((0, n)), np.zeros(0))

    def contains_point(self, x, tol: float = 1e-9) -> bool:
        if self.empty:
            return False
        x = np.asarray(x, dtype=float).reshape(-1)
        scale = np.linalg.norm(self.F, axis=1)
        return bool(np.all(self.F @ x <= self.theta + tol * np.maximum(scale, 1.0)))

    def support(self, d, tol_feas: float = 1e-8, method: str = "simplex") -> float:
        return support_hpoly(self, d, tol_feas, method)

    def is_empty(self, tol_feas: float = 1e-8, method: str = "simplex") -> bool:
        if self.empty:
            return True
        if self.rows == 0:
            return False
        out = lp_solve(LinearProgram.build(np.zeros(self.dim), A_in=self.F, b_in=self.theta), tol_feas, method)
        return out.status == LPStatus.INFEASIBLE

    def is_bounded(self, tol_feas: float = 1e-8, method: str = "simplex") -> bool:
        """Finite support along every +-e_i"""
        I = np.eye(self.dim)
        for d in np.vstack((I, -I)):
            if not np.isfinite(support_hpoly(self, d, tol_feas, method)):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            'type': 'hpoly',
            'dim': self.dim,
            'F': self.F.tolist(),
            'theta': self.theta.tolist(),
            'rows': self.rows,
            'empty': self.empty
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HPolyhedron":
        dim = data.get('dim')
        F = np.array(data['F'], dtype=float).reshape(len(data['theta']), -1 if dim is None else dim)
        return cls(F, data['theta'])


def _check_same_dim(P: HPolyhedron, Q: HPolyhedron):
    if P.dim != Q.dim:
        raise DimensionMismatchError(f"sets live in R^{P.dim} and R^{Q.dim}")


def closed_loop_constraints_h(X: HPolyhedron, Uc: HPolyhedron, K) -> HPolyhedron:
    """
    State constraints tightened by the input constraints under u = K x

    Args:
        X: State constraint set in R^n
        Uc: Input constraint set in R^m
        K: Gain (m x n)

    Returns:
        {x : F_X x <= theta_X, F_U K x <= theta_U}
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (Uc.dim, X.dim):
        raise DimensionMismatchError(f"gain has shape {K.shape}, expected ({Uc.dim}, {X.dim})")
    return HPolyhedron(
        np.vstack((X.F, Uc.F @ K)),
        np.concatenate((X.theta, Uc.theta)),
        X.empty or Uc.empty
    )


def preimage_linear_h(P: HPolyhedron, M) -> HPolyhedron:
    """{x : M x in P} = {x : F M x <= theta}; M need not be invertible"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != P.dim:
        raise DimensionMismatchError(f"map has {M.shape[0]} rows, set lives in R^{P.dim}")
    return HPolyhedron(P.F @ M, P.theta, P.empty)


def intersect_h(P: HPolyhedron, Q: HPolyhedron) -> HPolyhedron:
    _check_same_dim(P, Q)
    return HPolyhedron(np.vstack((P.F, Q.F)), np.concatenate((P.theta, Q.theta)), P.empty or Q.empty)


def _dedupe_parallel(F: np.ndarray, theta: np.ndarray, tol: float):
    """Keep, among positively parallel rows, only the tightest one"""
    norms = np.linalg.norm(F, axis=1)
    unit = F / norms[:, None]
    scaled = theta / norms
    keep = []
    taken = np.zeros(F.shape[0], dtype=bool)
    for i in range(F.shape[0]):
        if taken[i]:
            continue
        group = np.flatnonzero((unit @ unit[i] > 1 - tol) & ~taken)
        best = group[np.argmin(scaled[group])]
        taken[group] = True
        keep.append(best)
    keep.sort()
    return F[keep], theta[keep]


def remove_redundant(
    P: HPolyhedron,
    tol: float = 1e-8,
    method: str = "simplex"
) -> HPolyhedron:
    """
    Drop inequalities that do not shape the set, one LP per remaining row

    Args:
        P: Nonempty polyhedron
        tol: Absolute tolerance, scaled by the row norm
        method: LP backend

    Returns:
        Equivalent polyhedron with every row irredundant
    """
    if P.rows == 0:
        return P
    if P.is_empty(tol, method):
        raise EmptySetError("cannot reduce an empty polyhedron")
    F, theta = _dedupe_parallel(P.F, P.theta, PARALLEL_TOL)

    active = np.ones(F.shape[0], dtype=bool)
    for i in range(F.shape[0]):
        others = active.copy()
        others[i] = False
        # relax row i so the LP reports how far the others allow F_i x to grow
        A_in = np.vstack((F[others], F[i:i + 1]))
        b_in = np.concatenate((theta[others], [theta[i] + 1.0 + abs(theta[i])]))
        out = lp_solve(LinearProgram.build(F[i], A_in=A_in, b_in=b_in), tol, method)
        if out.status == LPStatus.INFEASIBLE:
            raise EmptySetError("polyhedron is empty", {'row': i})
        if out.status == LPStatus.OPTIMAL and out.value <= theta[i] + tol * np.linalg.norm(F[i]):
            active[i] = False

    reduced = HPolyhedron(F[active], theta[active])
    logger.debug("remove_redundant: %d -> %d rows", P.rows, reduced.rows)
    return reduced


def contains_h(
    P: HPolyhedron,
    Q: HPolyhedron,
    tol: float = 1e-8,
    method: str = "simplex"
) -> bool:
    """True iff Q is a subset of P (support of Q along every row of P)"""
    _check_same_dim(P, Q)
    if Q.empty:
        raise EmptySetError("containment test with an empty inner set")
    for Fi, ti in zip(P.F, P.theta):
        h = support_hpoly(Q, Fi, tol, method)
        if h > ti + tol * max(1.0, np.linalg.norm(Fi)):
            return False
    return True


def equals_h(P: HPolyhedron, Q: HPolyhedron, tol: float = 1e-8, method: str = "simplex") -> bool:
    return contains_h(P, Q, tol, method) and contains_h(Q, P, tol, method)


def vertices_lowdim(P: HPolyhedron, tol: float = 1e-9, method: str = "simplex") -> np.ndarray:
    """
    Vertices of a bounded polyhedron in dimension at most 3

    2-D vertices are returned counter-clockwise around their centroid.
    """
    n = P.dim
    if n > 3:
        raise DimensionTooHighError(f"vertex enumeration supports n <= 3, got {n}")
    if P.empty or P.is_empty(method=method):
        raise EmptySetError("vertices of an empty polyhedron")
    if not P.is_bounded(method=method):
        raise UnboundedSetError("vertices of an unbounded polyhedron")

    vertices: List[np.ndarray] = []
    for combo in itertools.combinations(range(P.rows), n):
        A = P.F[list(combo)]
        if abs(np.linalg.det(A)) < 1e-12 * max(1.0, np.prod(np.linalg.norm(A, axis=1))):
            continue
        x = np.linalg.solve(A, P.theta[list(combo)])
        if not P.contains_point(x, tol):
            continue
        if any(np.linalg.norm(x - v) <= 1e-7 * max(1.0, np.linalg.norm(v)) for v in vertices):
            continue
        vertices.append(x)

    V = np.array(vertices).reshape(-1, n)
    if n == 2 and len(V) > 2:
        center = V.mean(axis=0)
        angles = np.arctan2(V[:, 1] - center[1], V[:, 0] - center[0])
        V = V[np.argsort(angles)]
    return V
