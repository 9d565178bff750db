"""
LP Core Module
Bounded-variable primal simplex and the set queries built on it
(support functions, membership, emptiness)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from errors import DimensionMismatchError, EmptySetError, InvalidParamsError, NumericalStallError

if TYPE_CHECKING:
    from czset import ConstrainedZonotope
    from polyset import HPolyhedron

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
STALL_LIMIT = 25


class LPStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """
    maximize c^T x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper
    """
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @classmethod
    def build(
        cls,
        c,
        A_eq=None,
        b_eq=None,
        A_in=None,
        b_in=None,
        lower=None,
        upper=None
    ) -> "LinearProgram":
        """
        Assemble and validate an LP; omitted parts are empty, omitted bounds free

        Args:
            c: Objective (maximized)
            A_eq, b_eq: Equality rows
            A_in, b_in: Inequality rows
            lower, upper: Variable bounds (+-inf allowed)
        """
        c = np.asarray(c, dtype=float).reshape(-1)
        n = c.shape[0]

        def rows(A, b, label):
            if A is None or np.size(A) == 0:
                return np.zeros((0, n)), np.zeros(0)
            A = np.asarray(A, dtype=float).reshape(-1, n)
            b = np.asarray(b, dtype=float).reshape(-1)
            if A.shape[0] != b.shape[0]:
                raise DimensionMismatchError(f"{label}: {A.shape[0]} rows but {b.shape[0]} right-hand sides")
            return A, b

        A_eq, b_eq = rows(A_eq, b_eq, "equality")
        A_in, b_in = rows(A_in, b_in, "inequality")
        lower = np.full(n, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        if np.any(lower > upper):
            raise InvalidParamsError("LP bounds violate lower <= upper")
        return cls(c, A_eq, b_eq, A_in, b_in, lower, upper)


@dataclass
class LPOutcome:
    status: LPStatus
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    iterations: int = 0
    ray: Optional[np.ndarray] = None

    @property
    def optimal(self) -> bool:
        return self.status == LPStatus.OPTIMAL


class _Tableau:
    """
    Condensed tableau x_B = beta - T x_N over the variables of the standard
    form [structural | slacks | artificials].
    """

    def __init__(self, T, beta, basis, nonbasic, values, lower, upper):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.nonbasic = nonbasic
        self.values = values
        self.lower = lower
        self.upper = upper

    def refresh_basic(self):
        xN = self.values[self.nonbasic]
        self.values[self.basis] = self.beta - self.T @ xN if len(self.nonbasic) else self.beta

    def pivot(self, r: int, jj: int):
        T = self.T
        piv = T[r, jj]
        col = T[:, jj].copy()
        row = T[r, :] / piv
        row[jj] = 1.0 / piv
        T -= np.outer(col, row)
        T[:, jj] = -col / piv
        T[r, :] = row
        b_r = self.beta[r] / piv
        self.beta -= col * b_r
        self.beta[r] = b_r
        self.basis[r], self.nonbasic[jj] = self.nonbasic[jj], self.basis[r]

    def drop_nonbasic(self, keep: np.ndarray):
        self.T = self.T[:, keep]
        self.nonbasic = [j for j, k in zip(self.nonbasic, keep) if k]


def _run_phase(tab: _Tableau, cost: np.ndarray, max_iter: int) -> Tuple[str, int, Optional[Tuple[int, int]]]:
    """
    Primal simplex iterations on the tableau for maximizing cost^T y.

    Returns:
        ("optimal" | "unbounded", iterations, (entering var, direction) for unbounded)
    """
    tol_d = 1e-9 * max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
    bland = False
    degenerate_run = 0

    for it in range(max_iter):
        tab.refresh_basic()
        nb = np.array(tab.nonbasic, dtype=int)
        if nb.size == 0:
            return "optimal", it, None
        d = cost[nb] - tab.T.T @ cost[tab.basis]
        xN = tab.values[nb]
        can_up = (d > tol_d) & (xN < tab.upper[nb])
        can_down = (d < -tol_d) & (xN > tab.lower[nb])
        eligible = np.flatnonzero(can_up | can_down)
        if eligible.size == 0:
            return "optimal", it, None

        if bland:
            jj = int(eligible[np.argmin(nb[eligible])])
        else:
            jj = int(eligible[np.argmax(np.abs(d[eligible]))])
        j = int(nb[jj])
        direction = 1.0 if d[jj] > 0 else -1.0

        alpha = direction * tab.T[:, jj]
        xB = tab.values[tab.basis]
        lo_B = tab.lower[tab.basis]
        up_B = tab.upper[tab.basis]
        limits = np.full(alpha.shape, np.inf)
        dec = alpha > PIVOT_TOL
        inc = alpha < -PIVOT_TOL
        with np.errstate(invalid='ignore'):
            limits[dec] = (xB[dec] - lo_B[dec]) / alpha[dec]
            limits[inc] = (up_B[inc] - xB[inc]) / (-alpha[inc])
        limits = np.maximum(limits, 0.0)
        limits[np.isnan(limits)] = np.inf

        flip = tab.upper[j] - tab.lower[j]
        t_row = float(np.min(limits)) if limits.size else np.inf

        if not np.isfinite(t_row) and not np.isfinite(flip):
            return "unbounded", it, (jj, direction)

        if flip <= t_row:
            # entering variable jumps to its opposite bound, basis unchanged
            tab.values[j] = tab.upper[j] if direction > 0 else tab.lower[j]
            step = flip
        else:
            ties = np.flatnonzero(limits <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(np.array(tab.basis)[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = tab.basis[r]
            entering_value = tab.values[j] + direction * t_row
            tab.values[leaving] = tab.lower[leaving] if alpha[r] > 0 else tab.upper[leaving]
            tab.pivot(r, jj)
            tab.values[j] = entering_value
            step = t_row

        if step <= 1e-12:
            degenerate_run += 1
            if degenerate_run > STALL_LIMIT and not bland:
                logger.debug("simplex: switching to Bland's rule after %d degenerate pivots", degenerate_run)
                bland = True
        else:
            degenerate_run = 0

    raise NumericalStallError(f"Simplex made no progress within {max_iter} iterations")


def _solve_simplex(lp: LinearProgram, tol_feas: float, max_iter: Optional[int]) -> LPOutcome:
    n = lp.n
    m_in = lp.A_in.shape[0]
    m_eq = lp.A_eq.shape[0]
    m = m_in + m_eq

    A = np.vstack((lp.A_in, lp.A_eq))
    b = np.concatenate((lp.b_in, lp.b_eq))

    # nonbasic start: a finite bound, otherwise zero
    x0 = np.where(np.isfinite(lp.lower), lp.lower, np.where(np.isfinite(lp.upper), lp.upper, 0.0))
    residual = b - A @ x0 if m else np.zeros(0)

    n_slack = m_in
    needs_art = [i for i in range(m) if i >= m_in or residual[i] < 0]
    n_art = len(needs_art)
    n_total = n + n_slack + n_art

    lower = np.concatenate((lp.lower, np.zeros(n_slack), np.zeros(n_art)))
    upper = np.concatenate((lp.upper, np.full(n_slack, np.inf), np.full(n_art, np.inf)))
    values = np.concatenate((x0, np.zeros(n_slack + n_art)))

    basis: List[int] = []
    coef = np.ones(m)
    art_of_row = {}
    for k, i in enumerate(needs_art):
        art_of_row[i] = n + n_slack + k
        coef[i] = 1.0 if residual[i] >= 0 else -1.0
    for i in range(m):
        basis.append(art_of_row[i] if i in art_of_row else n + i)

    # nonbasic columns: structural, then slacks displaced by artificials
    nonbasic = list(range(n)) + [n + i for i in range(m_in) if i in art_of_row]
    N = np.zeros((m, len(nonbasic)))
    if n:
        N[:, :n] = A
    for col, var in enumerate(nonbasic[n:], start=n):
        N[var - n, col] = 1.0
    T = coef[:, None] * N
    beta = coef * b

    tab = _Tableau(T, beta, basis, nonbasic, values, lower, upper)
    if max_iter is None:
        max_iter = 50 * (m + n_total) + 500
    iterations = 0

    if n_art:
        cost1 = np.zeros(n_total)
        cost1[n + n_slack:] = -1.0
        _, its, _ = _run_phase(tab, cost1, max_iter)
        iterations += its
        tab.refresh_basic()
        infeasibility = float(np.sum(tab.values[n + n_slack:]))
        if infeasibility > tol_feas:
            return LPOutcome(LPStatus.INFEASIBLE, iterations=iterations)

        # artificials are fixed at zero from here on
        tab.upper[n + n_slack:] = 0.0
        tab.values[n + n_slack:] = 0.0
        for r, var in enumerate(list(tab.basis)):
            if var < n + n_slack:
                continue
            cand = [jj for jj, j in enumerate(tab.nonbasic)
                    if j < n + n_slack and tab.upper[j] > tab.lower[j] and abs(tab.T[r, jj]) > PIVOT_TOL]
            if cand:
                jj = max(cand, key=lambda c: abs(tab.T[r, c]))
                value = tab.values[tab.nonbasic[jj]]
                tab.pivot(r, jj)
                tab.values[tab.basis[r]] = value
        keep = np.array([j < n + n_slack for j in tab.nonbasic], dtype=bool)
        tab.drop_nonbasic(keep)

    cost2 = np.zeros(n_total)
    cost2[:n] = lp.c
    status, its, unbounded = _run_phase(tab, cost2, max_iter)
    iterations += its
    tab.refresh_basic()

    if status == "unbounded":
        jj, direction = unbounded
        ray = np.zeros(n_total)
        ray[tab.nonbasic[jj]] = direction
        ray[tab.basis] = -direction * tab.T[:, jj]
        return LPOutcome(LPStatus.UNBOUNDED, iterations=iterations, ray=ray[:n])

    x = tab.values[:n].copy()
    return LPOutcome(LPStatus.OPTIMAL, x=x, value=float(lp.c @ x), iterations=iterations)


def _solve_highs(lp: LinearProgram) -> LPOutcome:
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(up) else up)
              for lo, up in zip(lp.lower, lp.upper)]
    res = linprog(
        -lp.c,
        A_ub=lp.A_in if lp.A_in.shape[0] else None,
        b_ub=lp.b_in if lp.A_in.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs"
    )
    iterations = int(getattr(res, 'nit', 0) or 0)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return LPOutcome(LPStatus.OPTIMAL, x=x, value=float(lp.c @ x), iterations=iterations)
    if res.status == 2:
        return LPOutcome(LPStatus.INFEASIBLE, iterations=iterations)
    if res.status == 3:
        return LPOutcome(LPStatus.UNBOUNDED, iterations=iterations)
    raise NumericalStallError(f"HiGHS stopped with status {res.status}: {res.message}")


def lp_solve(
    lp: LinearProgram,
    tol_feas: float = 1e-8,
    method: str = "simplex",
    max_iter: Optional[int] = None
) -> LPOutcome:
    """
    Solve a linear program

    Args:
        lp: Problem (maximization)
        tol_feas: Phase-1 residual above which the LP is declared infeasible
        method: "simplex" (bounded-variable primal simplex) or "highs" (scipy)
        max_iter: Pivot cap; NumericalStallError beyond it

    Returns:
        LPOutcome with the maximizer, or a ray certificate when unbounded
    """
    if method == "highs":
        return _solve_highs(lp)
    if method != "simplex":
        raise InvalidParamsError(f"Unknown LP method: {method}")
    return _solve_simplex(lp, tol_feas, max_iter)


# ---------------------------------------------------------------------------
# Set queries
# ---------------------------------------------------------------------------

def support_point_hpoly(
    P: "HPolyhedron",
    d,
    tol_feas: float = 1e-8,
    method: str = "simplex"
) -> Tuple[float, Optional[np.ndarray]]:
    """
    Support value and maximizer of {x : F x <= theta} in direction d

    Returns:
        (value, x); value is +inf (and x None) when unbounded in d
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.shape[0] != P.dim:
        raise DimensionMismatchError(f"direction has length {d.shape[0]}, set lives in R^{P.dim}")
    if P.empty:
        raise EmptySetError("support of an empty polyhedron")
    out = lp_solve(LinearProgram.build(d, A_in=P.F, b_in=P.theta), tol_feas, method)
    if out.status == LPStatus.INFEASIBLE:
        raise EmptySetError("support LP infeasible: polyhedron is empty")
    if out.status == LPStatus.UNBOUNDED:
        return np.inf, None
    return out.value, out.x


def support_hpoly(P: "HPolyhedron", d, tol_feas: float = 1e-8, method: str = "simplex") -> float:
    return support_point_hpoly(P, d, tol_feas, method)[0]


def _cz_lp(Z: "ConstrainedZonotope", objective, extra_A=None, extra_b=None) -> LinearProgram:
    D = Z.order
    A_eq, b_eq = Z.F_eq, Z.theta_eq
    if extra_A is not None:
        A_eq = np.vstack((A_eq, extra_A))
        b_eq = np.concatenate((b_eq, extra_b))
    return LinearProgram.build(objective, A_eq=A_eq, b_eq=b_eq, lower=-np.ones(D), upper=np.ones(D))


def support_point_cz(
    Z: "ConstrainedZonotope",
    d,
    tol_feas: float = 1e-8,
    method: str = "simplex"
) -> Tuple[float, np.ndarray]:
    """Support value and maximizing point of a constrained zonotope"""
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.shape[0] != Z.dim:
        raise DimensionMismatchError(f"direction has length {d.shape[0]}, set lives in R^{Z.dim}")
    if Z.order == 0:
        if Z.F_eq.shape[0] and np.any(np.abs(Z.theta_eq) > tol_feas):
            raise EmptySetError("constrained zonotope is empty")
        return float(d @ Z.c), Z.c.copy()
    out = lp_solve(_cz_lp(Z, Z.G.T @ d), tol_feas, method)
    if out.status == LPStatus.INFEASIBLE:
        raise EmptySetError("constrained zonotope is empty")
    if out.status == LPStatus.UNBOUNDED:
        # box-bounded variables cannot be unbounded
        raise NumericalStallError("support LP over a box reported unbounded")
    return float(d @ Z.c) + out.value, Z.c + Z.G @ out.x


def support_cz(Z: "ConstrainedZonotope", d, tol_feas: float = 1e-8, method: str = "simplex") -> float:
    return support_point_cz(Z, d, tol_feas, method)[0]


def member_cz(Z: "ConstrainedZonotope", x, tol_feas: float = 1e-8, method: str = "simplex") -> bool:
    """True iff x = c + G lambda for some feasible lambda"""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != Z.dim:
        raise DimensionMismatchError(f"point has length {x.shape[0]}, set lives in R^{Z.dim}")
    if Z.order == 0:
        ok_eq = not Z.F_eq.shape[0] or np.all(np.abs(Z.theta_eq) <= tol_feas)
        return bool(ok_eq and np.all(np.abs(x - Z.c) <= tol_feas))
    out = lp_solve(_cz_lp(Z, np.zeros(Z.order), Z.G, x - Z.c), tol_feas, method)
    return out.status == LPStatus.OPTIMAL


def cz_is_empty(Z: "ConstrainedZonotope", tol_feas: float = 1e-8, method: str = "simplex") -> bool:
    if Z.order == 0:
        return bool(Z.F_eq.shape[0] and np.any(np.abs(Z.theta_eq) > tol_feas))
    out = lp_solve(_cz_lp(Z, np.zeros(Z.order)), tol_feas, method)
    return out.status == LPStatus.INFEASIBLE
