"""
Constrained Zonotope Module
Sets <c, G, F_eq, theta_eq> = {c + G l : F_eq l = theta_eq, ||l||_inf <= 1}
and the exact operations the MPI recurrence needs
"""
import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionMismatchError, EmptySetError, InputValidationError
from lpcore import cz_is_empty, member_cz, support_cz, support_hpoly
from polyset import HPolyhedron

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConstrainedZonotope:
    """
    Center c (n), generators G (n x D), equality rows F_eq (n_c x D), theta_eq (n_c).
    Empty constraint rows give a plain zonotope.
    """
    c: np.ndarray
    G: np.ndarray
    F_eq: np.ndarray
    theta_eq: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        G = np.array(self.G, dtype=float).reshape(c.shape[0], -1)
        D = G.shape[1]
        theta_eq = np.array(self.theta_eq, dtype=float).reshape(-1)
        F_eq = np.array(self.F_eq, dtype=float).reshape(theta_eq.shape[0], D)
        for name, arr in (('c', c), ('G', G), ('F_eq', F_eq), ('theta_eq', theta_eq)):
            if not np.all(np.isfinite(arr)):
                raise InputValidationError(f"constrained zonotope {name} has non-finite entries")
        object.__setattr__(self, 'c', c)
        object.__setattr__(self, 'G', G)
        object.__setattr__(self, 'F_eq', F_eq)
        object.__setattr__(self, 'theta_eq', theta_eq)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def order(self) -> int:
        """Number of generators D"""
        return self.G.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.F_eq.shape[0]

    @classmethod
    def box(cls, radii, center=None) -> "ConstrainedZonotope":
        radii = np.asarray(radii, dtype=float).reshape(-1)
        n = radii.shape[0]
        center = np.zeros(n) if center is None else center
        return cls(center, np.diag(radii), np.zeros((0, n)), np.zeros(0))

    @classmethod
    def from_hpoly(cls, P: HPolyhedron, tol_feas: float = 1e-8, method: str = "simplex") -> "ConstrainedZonotope":
        """
        Bounded polyhedron as a constrained zonotope: its bounding box plus one
        slack generator per inequality
        """
        n = P.dim
        I = np.eye(n)
        upper = np.array([support_hpoly(P, e, tol_feas, method) for e in I])
        lower = -np.array([support_hpoly(P, -e, tol_feas, method) for e in I])
        if not (np.all(np.isfinite(upper)) and np.all(np.isfinite(lower))):
            raise InputValidationError("only bounded polyhedra convert to constrained zonotopes")
        center = 0.5 * (upper + lower)
        half = 0.5 * (upper - lower)
        # rows the bounding box already satisfies need no slack generator
        reach = np.abs(P.F) @ half
        cut = P.theta < P.F @ center + reach - tol_feas * np.maximum(1.0, np.linalg.norm(P.F, axis=1))
        F, theta = P.F[cut], P.theta[cut]
        # row support over the box gives the slack range of each inequality
        sigma = F @ center - np.abs(F) @ half
        slack = 0.5 * (theta - sigma)
        G = np.hstack((np.diag(half), np.zeros((n, F.shape[0]))))
        F_eq = np.hstack((F @ np.diag(half), np.diag(slack)))
        theta_eq = theta - F @ center - slack
        return cls(center, G, F_eq, theta_eq)

    def to_hpoly(self) -> HPolyhedron:
        """Exact H-form of a parallelotope (square invertible G, no equality rows)"""
        if self.n_constraints or self.order != self.dim:
            raise InputValidationError("H-form conversion needs a parallelotope")
        Ginv = np.linalg.inv(self.G)
        F = np.vstack((Ginv, -Ginv))
        shift = Ginv @ self.c
        return HPolyhedron(F, np.concatenate((1.0 + shift, 1.0 - shift)))

    def support(self, d, tol_feas: float = 1e-8, method: str = "simplex") -> float:
        return support_cz(self, d, tol_feas, method)

    def contains_point(self, x, tol_feas: float = 1e-8, method: str = "simplex") -> bool:
        return member_cz(self, x, tol_feas, method)

    def is_empty(self, tol_feas: float = 1e-8, method: str = "simplex") -> bool:
        return cz_is_empty(self, tol_feas, method)

    def to_dict(self) -> dict:
        return {
            'type': 'czono',
            'c': self.c.tolist(),
            'G': self.G.tolist(),
            'F_eq': self.F_eq.tolist(),
            'theta_eq': self.theta_eq.tolist(),
            'D': self.order,
            'n_c': self.n_constraints
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConstrainedZonotope":
        return cls(data['c'], data['G'], data['F_eq'], data['theta_eq'])


def _check_same_dim(Z: ConstrainedZonotope, Y: ConstrainedZonotope):
    if Z.dim != Y.dim:
        raise DimensionMismatchError(f"sets live in R^{Z.dim} and R^{Y.dim}")


def linear_map(Z: ConstrainedZonotope, M) -> ConstrainedZonotope:
    """Image M Z"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != Z.dim:
        raise DimensionMismatchError(f"map has {M.shape[1]} columns, set lives in R^{Z.dim}")
    return ConstrainedZonotope(M @ Z.c, M @ Z.G, Z.F_eq, Z.theta_eq)


def cz_generalized_intersect(Z: ConstrainedZonotope, Y: ConstrainedZonotope, R) -> ConstrainedZonotope:
    """
    {x in Z : R x in Y}

    Args:
        Z: Set in R^n
        Y: Set in R^m
        R: Map (m x n)
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (Y.dim, Z.dim):
        raise DimensionMismatchError(f"map has shape {R.shape}, expected ({Y.dim}, {Z.dim})")
    Dz, Dy = Z.order, Y.order
    G = np.hstack((Z.G, np.zeros((Z.dim, Dy))))
    F_eq = np.vstack((
        np.hstack((Z.F_eq, np.zeros((Z.n_constraints, Dy)))),
        np.hstack((np.zeros((Y.n_constraints, Dz)), Y.F_eq)),
        np.hstack((R @ Z.G, -Y.G)),
    ))
    theta_eq = np.concatenate((Z.theta_eq, Y.theta_eq, Y.c - R @ Z.c))
    return ConstrainedZonotope(Z.c, G, F_eq, theta_eq)


def cz_intersect(Z1: ConstrainedZonotope, Z2: ConstrainedZonotope) -> ConstrainedZonotope:
    _check_same_dim(Z1, Z2)
    return cz_generalized_intersect(Z1, Z2, np.eye(Z1.dim))


def closed_loop_constraints_cz(X: ConstrainedZonotope, Uc: ConstrainedZonotope, K) -> ConstrainedZonotope:
    """State set tightened by the input set under u = K x: {x in X : K x in Uc}"""
    return cz_generalized_intersect(X, Uc, K)


def cz_recurrence_step(Zk: ConstrainedZonotope, M_inv, Xbar: ConstrainedZonotope) -> ConstrainedZonotope:
    """
    Predecessor step M^{-1} Omega_k intersected with Xbar

    Args:
        Zk: Current set Omega_k
        M_inv: Inverse of the (invertible) dynamics
        Xbar: Tightened constraint set

    Returns:
        Omega_{k+1}; D grows by D_Xbar and n_c by n_c_Xbar + n
    """
    _check_same_dim(Zk, Xbar)
    return cz_intersect(linear_map(Zk, M_inv), Xbar)


def cz_contained_in_hpoly(
    Z: ConstrainedZonotope,
    P: HPolyhedron,
    tol: float = 1e-8,
    method: str = "simplex"
) -> bool:
    """True iff every row of P bounds Z within tol (scaled by the row norm)"""
    if Z.dim != P.dim:
        raise DimensionMismatchError(f"sets live in R^{Z.dim} and R^{P.dim}")
    if P.empty:
        raise EmptySetError("containment in an empty polyhedron")
    for Fi, ti in zip(P.F, P.theta):
        if support_cz(Z, Fi, tol, method) > ti + tol * max(1.0, np.linalg.norm(Fi)):
            return False
    return True
