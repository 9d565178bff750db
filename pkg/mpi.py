"""
MPI Module
Maximal positively invariant sets: the standard backward recurrence, the
ordered-Schur pipeline for closed loops with zero eigenvalues, and a
forward-power oracle used to cross-check both
"""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from czset import (
    ConstrainedZonotope,
    closed_loop_constraints_cz,
    cz_contained_in_hpoly,
    cz_generalized_intersect,
    cz_recurrence_step,
)
from errors import (
    DimensionMismatchError,
    EmptySetError,
    InputValidationError,
    IterationCapExceededError,
    NoZeroEigenvaluesError,
    SingularDynamicsError,
    UnboundedSetError,
)
from matops import (
    as_matrix,
    eig_block_diag,
    jordan_cells,
    order_schur_zeros_last,
    real_schur,
    require_square,
    solve,
    zero_eigenvalue_structure,
)
from polyset import (
    HPolyhedron,
    closed_loop_constraints_h,
    contains_h,
    intersect_h,
    preimage_linear_h,
    remove_redundant,
)
from settings import MPIOptions

logger = logging.getLogger(__name__)

SetType = Union[HPolyhedron, ConstrainedZonotope]


@dataclass(frozen=True, eq=False)
class LTISystem:
    """x+ = A x + B u with optional static feedback u = sign * K x"""
    A: np.ndarray
    B: np.ndarray
    K: Optional[np.ndarray] = None
    sign: int = 1

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = require_square(A, "A")
        B = as_matrix(self.B, "B") if np.size(self.B) else np.zeros((n, 0))
        if B.shape[0] != n:
            raise DimensionMismatchError(f"B has {B.shape[0]} rows, A is {n}x{n}")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)
        if self.K is not None:
            K = as_matrix(self.K, "K")
            if K.shape != (B.shape[1], n):
                raise DimensionMismatchError(f"K has shape {K.shape}, expected ({B.shape[1]}, {n})")
            object.__setattr__(self, 'K', K)
        if self.sign not in (1, -1):
            raise InputValidationError("sign convention must be +1 or -1")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def effective_gain(self) -> np.ndarray:
        if self.K is None:
            return np.zeros((self.m, self.n))
        return self.sign * self.K

    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.effective_gain


@dataclass(frozen=True, eq=False)
class SchurSplit:
    """Ordered Schur factors of a closed loop with d2 eigenvalues at zero"""
    U: np.ndarray
    S11: np.ndarray
    S12: np.ndarray
    S22: np.ndarray
    d1: int
    d2: int
    p: int
    T: np.ndarray
    weyr: Tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.d1 + self.d2

    @property
    def U1(self) -> np.ndarray:
        return self.U[:, :self.d1]

    @property
    def U2(self) -> np.ndarray:
        return self.U[:, self.d1:]

    @property
    def S(self) -> np.ndarray:
        return np.block([[self.S11, self.S12], [np.zeros((self.d2, self.d1)), self.S22]])

    @property
    def jordan_cells(self) -> List[Tuple[int, int]]:
        return jordan_cells(list(self.weyr))

    def horizon(self, p_offset: int = 0) -> int:
        """Steps after which the trailing coordinates vanish"""
        return self.p + 1 + p_offset

    def lift_map(self, p_offset: int = 0) -> np.ndarray:
        """[S11^h  S11^(h-1) T] U^T, mapping x_0 to the reduced state reached at step h"""
        h = self.horizon(p_offset)
        S11_pow = np.linalg.matrix_power(self.S11, h - 1)
        return np.hstack((S11_pow @ self.S11, S11_pow @ self.T)) @ self.U.T

    def to_dict(self) -> dict:
        return {
            'd1': self.d1,
            'd2': self.d2,
            'p': self.p,
            'weyr': list(self.weyr),
            'jordan_cells': [list(c) for c in self.jordan_cells],
            'S11': self.S11.tolist(),
            'S12': self.S12.tolist(),
            'S22': self.S22.tolist(),
            'T': self.T.tolist(),
            'U': self.U.tolist()
        }


@dataclass(eq=False)
class MPIResult:
    set: SetType
    k_bar: int
    row_count: int
    wall_time: float
    branch: str
    backend: str = "hpoly"
    generators: Optional[int] = None
    horizon: Optional[int] = None
    reduced: Optional["MPIResult"] = None
    split: Optional[SchurSplit] = field(default=None, repr=False)

    def to_dict(self, include_set: bool = True) -> dict:
        out = {
            'branch': self.branch,
            'backend': self.backend,
            'k_bar': self.k_bar,
            'wall_time_ms': round(self.wall_time * 1000.0, 3),
        }
        if self.backend == "czono":
            out['D'] = self.generators
            out['n_c'] = self.row_count
        else:
            out['q_bar'] = self.row_count
        if self.horizon is not None:
            out['horizon'] = self.horizon
        if self.reduced is not None:
            out['reduced'] = self.reduced.to_dict(include_set)
        if self.split is not None:
            out['split'] = self.split.to_dict()
        if include_set:
            out['set'] = self.set.to_dict()
        return out


def _result(
    omega: SetType,
    k_bar: int,
    started: float,
    branch: str,
    **extra
) -> MPIResult:
    if isinstance(omega, ConstrainedZonotope):
        return MPIResult(omega, k_bar, omega.n_constraints, time.perf_counter() - started, branch,
                         backend="czono", generators=omega.order, **extra)
    return MPIResult(omega, k_bar, omega.rows, time.perf_counter() - started, branch, **extra)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def zero_eigenvalue_count(A: np.ndarray, eps_zero: float) -> int:
    return int(sum(zero_eigenvalue_structure(A, eps_zero)))


def validate_constraint_set(Xbar: HPolyhedron, opts: MPIOptions, bounded: bool = True):
    """
    Xbar must be nonempty and contain the origin in its interior. The
    standard branch also needs it bounded; the singular branch only needs a
    bounded reduced set, which the reduced recurrence checks itself.
    """
    if Xbar.empty or Xbar.is_empty(opts.tol_feas, opts.lp_backend):
        raise EmptySetError("constraint set is empty")
    if np.any(Xbar.theta <= 0):
        raise UnboundedSetError(
            "origin is not interior to the constraint set",
            {'rows': np.flatnonzero(Xbar.theta <= 0).tolist()}
        )
    if bounded and not Xbar.is_bounded(opts.tol_feas, opts.lp_backend):
        raise UnboundedSetError("constraint set is unbounded")


def _prepare(A_cl, Xbar_dim: int) -> np.ndarray:
    A = as_matrix(A_cl, "A_cl")
    n = require_square(A, "A_cl")
    if n != Xbar_dim:
        raise DimensionMismatchError(f"closed loop is {n}x{n}, constraint set lives in R^{Xbar_dim}")
    return A


# ---------------------------------------------------------------------------
# Standard branch
# ---------------------------------------------------------------------------

def mpi_standard_h(A_cl, Xbar: HPolyhedron, opts: Optional[MPIOptions] = None) -> MPIResult:
    """
    Backward recurrence Omega_{k+1} = A^{-1} Omega_k intersected with Xbar

    Args:
        A_cl: Invertible closed-loop matrix
        Xbar: Tightened constraint set (bounded, origin interior)
        opts: Numerical options

    Returns:
        MPIResult with k_bar the first k where Omega_k = Omega_{k+1}
    """
    opts = opts or MPIOptions()
    started = time.perf_counter()
    A = _prepare(A_cl, Xbar.dim)
    if singular_split(A, opts) is not None:
        raise SingularDynamicsError("closed loop has zero eigenvalues; use the singular branch")
    validate_constraint_set(Xbar, opts)

    tol, method = opts.tol_feas, opts.lp_backend
    omega = remove_redundant(Xbar, tol, method)
    for k in range(opts.k_max):
        pre = preimage_linear_h(omega, A)
        # Omega_{k+1} is always inside Omega_k, so one inclusion decides equality
        if contains_h(pre, omega, tol, method):
            logger.info("standard H recurrence: fixed point at k=%d with %d rows", k, omega.rows)
            return _result(omega, k, started, "standard")
        omega = remove_redundant(intersect_h(pre, Xbar), tol, method)
        logger.debug("standard H recurrence: k=%d, rows=%d", k + 1, omega.rows)
    raise IterationCapExceededError(f"no fixed point within k_max={opts.k_max}", {'rows': omega.rows})


def mpi_standard_cz(
    A_cl,
    Xbar_cz: ConstrainedZonotope,
    Xbar_h: HPolyhedron,
    opts: Optional[MPIOptions] = None
) -> MPIResult:
    """
    Constrained-zonotope recurrence; termination is decided against the
    half-space rows F A^(k+1) x <= theta of the next step
    """
    opts = opts or MPIOptions()
    started = time.perf_counter()
    A = _prepare(A_cl, Xbar_cz.dim)
    if Xbar_h.dim != Xbar_cz.dim:
        raise DimensionMismatchError("half-space and zonotope forms of the constraint set differ in dimension")
    if singular_split(A, opts) is not None:
        raise SingularDynamicsError("closed loop has zero eigenvalues; use the singular branch")
    validate_constraint_set(Xbar_h, opts)

    A_inv = solve(A, np.eye(A.shape[0]))
    tol, method = opts.tol_feas, opts.lp_backend
    omega = Xbar_cz
    A_pow = A.copy()
    for k in range(opts.k_max):
        if cz_contained_in_hpoly(omega, preimage_linear_h(Xbar_h, A_pow), tol, method):
            logger.info("standard CZ recurrence: fixed point at k=%d (D=%d, n_c=%d)",
                        k, omega.order, omega.n_constraints)
            return _result(omega, k, started, "standard")
        omega = cz_recurrence_step(omega, A_inv, Xbar_cz)
        A_pow = A_pow @ A
        logger.debug("standard CZ recurrence: k=%d, D=%d, n_c=%d", k + 1, omega.order, omega.n_constraints)
    raise IterationCapExceededError(f"no fixed point within k_max={opts.k_max}")


# ---------------------------------------------------------------------------
# Ordered Schur split
# ---------------------------------------------------------------------------

def compute_T(split: SchurSplit) -> np.ndarray:
    """T = sum_{i=0}^{p} S11^{-i} S12 S22^i"""
    term = split.S12.copy()
    T = term.copy()
    for _ in range(split.p):
        term = solve(split.S11, term @ split.S22)
        T = T + term
    return T


def schur_split(A_cl, eps_zero: float = 1e-9, tol_nil: float = 1e-9) -> SchurSplit:
    """
    Ordered real Schur form with the zero eigenvalues in the trailing block

    Args:
        A_cl: Closed-loop matrix with at least one zero eigenvalue
        eps_zero: Relative rank threshold used to count zero eigenvalues
        tol_nil: Relative nilpotency tolerance defining p

    Returns:
        SchurSplit with p minimal such that ||S22^(p+1)||_F <= tol_nil ||A||_F

    Raises:
        NoZeroEigenvaluesError: no eigenvalue at zero, or the trailing block
            picked by the rank count is not nilpotent (an ill-conditioned but
            invertible closed loop)
    """
    A = as_matrix(A_cl, "A_cl")
    n = require_square(A, "A_cl")
    weyr = zero_eigenvalue_structure(A, eps_zero)
    d2 = int(sum(weyr))
    if d2 == 0:
        raise NoZeroEigenvaluesError("closed loop has no zero eigenvalues")

    f = order_schur_zeros_last(real_schur(A), eps_zero, zero_count=d2)
    if f.zero_dim != d2:
        logger.warning("zero cluster in Schur form has size %d, rank count gives %d", f.zero_dim, d2)
        d2 = f.zero_dim
    d1 = n - d2
    S, U = f.S, f.U
    S11, S12, S22 = S[:d1, :d1], S[:d1, d1:], S[d1:, d1:]

    scale = np.linalg.norm(A)
    p = 0
    power = S22.copy()
    while np.linalg.norm(power) > tol_nil * scale and p < d2:
        power = power @ S22
        p += 1

    # a Jordan cell of size s moves a zero eigenvalue by about eps^(1/s)
    radius = eps_zero ** (1.0 / max(len(weyr), 1)) * scale
    largest = max((abs(z) for z in eig_block_diag(S22)), default=0.0)
    residual = float(np.linalg.norm(power))
    if residual > tol_nil * scale or largest > radius:
        raise NoZeroEigenvaluesError(
            "trailing Schur block is not nilpotent; the closed loop is invertible",
            {'d2': d2, 'max_abs_eigenvalue': float(largest), 'zero_radius': float(radius),
             'nilpotency_residual': residual, 'tol': tol_nil * scale}
        )
    if p + 1 != len(weyr):
        logger.warning("nilpotency index p+1=%d differs from the largest Jordan cell %d", p + 1, len(weyr))

    split = SchurSplit(U, S11, S12, S22, d1, d2, p, np.zeros((d1, d2)), tuple(weyr))
    T = compute_T(split) if d1 else np.zeros((0, d2))
    logger.info("schur_split: d1=%d, d2=%d, p=%d, jordan cells %s", d1, d2, p, jordan_cells(weyr))
    return SchurSplit(U, S11, S12, S22, d1, d2, p, T, tuple(weyr))


def singular_split(A_cl, opts: Optional[MPIOptions] = None) -> Optional[SchurSplit]:
    """Schur split when the closed loop has a nilpotent zero cluster, None for the standard branch"""
    opts = opts or MPIOptions()
    A = as_matrix(A_cl, "A_cl")
    if zero_eigenvalue_count(A, opts.eps_zero) == 0:
        return None
    try:
        return schur_split(A, opts.eps_zero, opts.tol_nil)
    except NoZeroEigenvaluesError as e:
        logger.info("rank test flags %d small singular values but %s; standard branch",
                    e.detail.get('d2', 0), e.message)
        return None


def reduced_constraints_h(split: SchurSplit, Xbar: HPolyhedron) -> HPolyhedron:
    """Z = {z : F U1 z <= theta}"""
    if Xbar.dim != split.n:
        raise DimensionMismatchError(f"constraint set lives in R^{Xbar.dim}, split has n={split.n}")
    return HPolyhedron(Xbar.F @ split.U1, Xbar.theta, Xbar.empty)


def reduced_constraints_cz(split: SchurSplit, Xbar_cz: ConstrainedZonotope) -> ConstrainedZonotope:
    """Z = <U1^T c, U1^T G, [F; U2^T G], [theta; -U2^T c]>, the slice y2 = 0 in reduced coordinates"""
    if Xbar_cz.dim != split.n:
        raise DimensionMismatchError(f"constraint set lives in R^{Xbar_cz.dim}, split has n={split.n}")
    U1, U2 = split.U1, split.U2
    return ConstrainedZonotope(
        U1.T @ Xbar_cz.c,
        U1.T @ Xbar_cz.G,
        np.vstack((Xbar_cz.F_eq, U2.T @ Xbar_cz.G)),
        np.concatenate((Xbar_cz.theta_eq, -U2.T @ Xbar_cz.c))
    )


def lift_kernel_directions(split: SchurSplit) -> np.ndarray:
    """
    Basis (columns) of the kernel of the lift map: x = U2 w - U1 S11^{-1} T w.
    The lifted reduced set is unbounded along every one of them.
    """
    if split.d1 == 0:
        return split.U2.copy()
    return split.U2 - split.U1 @ solve(split.S11, split.T)


def constraint_subspace_bound(split: SchurSplit, k: int) -> int:
    """
    Upper bound on the rank of the step-k constraint rows F A^k:
    n minus the total size of Jordan cells of zero shorter than k
    """
    return split.n - sum(size * count for size, count in split.jordan_cells if size < k)


# ---------------------------------------------------------------------------
# Singular branch
# ---------------------------------------------------------------------------

def _forward_prefix_h(
    A: np.ndarray,
    Xbar: HPolyhedron,
    steps: int,
    opts: MPIOptions
) -> Tuple[HPolyhedron, Optional[int]]:
    """
    Intersect {F A^k x <= theta} for k = 0..steps-1. Returns (set, k_bar) where
    k_bar is set when the rows of some step k <= steps are already implied.
    """
    tol, method = opts.tol_feas, opts.lp_backend
    omega = remove_redundant(Xbar, tol, method)
    A_pow = np.eye(A.shape[0])
    for k in range(1, steps + 1):
        A_pow = A_pow @ A
        rows = preimage_linear_h(Xbar, A_pow)
        if contains_h(rows, omega, tol, method):
            return omega, k - 1
        if k < steps:
            omega = remove_redundant(intersect_h(omega, rows), tol, method)
    return omega, None


def _forward_prefix_cz(
    A: np.ndarray,
    Xbar_cz: ConstrainedZonotope,
    Xbar_h: HPolyhedron,
    steps: int,
    opts: MPIOptions
) -> Tuple[ConstrainedZonotope, Optional[int]]:
    """Zonotope counterpart of _forward_prefix_h using A^k-generalized intersections"""
    tol, method = opts.tol_feas, opts.lp_backend
    omega = Xbar_cz
    A_pow = np.eye(A.shape[0])
    for k in range(1, steps + 1):
        A_pow = A_pow @ A
        if cz_contained_in_hpoly(omega, preimage_linear_h(Xbar_h, A_pow), tol, method):
            return omega, k - 1
        if k < steps:
            omega = cz_generalized_intersect(omega, Xbar_cz, A_pow)
    return omega, None


def mpi_singular_h(
    A_cl,
    Xbar: HPolyhedron,
    opts: Optional[MPIOptions] = None,
    split: Optional[SchurSplit] = None
) -> MPIResult:
    """
    MPI set of a closed loop with zero eigenvalues in half-space form:
    the first h = p + 1 steps explicitly, the rest through the reduced
    recurrence on S11 lifted back by [S11^h  S11^(h-1) T] U^T.
    Xbar may be unbounded as long as its reduced set Z is bounded.
    """
    opts = opts or MPIOptions()
    started = time.perf_counter()
    A = _prepare(A_cl, Xbar.dim)
    validate_constraint_set(Xbar, opts, bounded=False)
    split = split or schur_split(A, opts.eps_zero, opts.tol_nil)
    h = split.horizon(opts.p_offset)
    tol, method = opts.tol_feas, opts.lp_backend

    prefix, early = _forward_prefix_h(A, Xbar, h, opts)
    if early is not None:
        logger.info("singular H branch: constraints stop at k=%d before the lift", early)
        return _result(prefix, early, started, "singular", horizon=h, split=split)

    if split.d1 == 0:
        # dead-beat: A^h = 0, the explicit steps are the whole answer
        logger.info("singular H branch: dead-beat closed loop, horizon %d", h)
        return _result(prefix, h - 1, started, "singular", horizon=h, split=split)

    Z = reduced_constraints_h(split, Xbar)
    reduced = mpi_standard_h(split.S11, Z, opts)
    lifted = preimage_linear_h(reduced.set, split.lift_map(opts.p_offset))
    phi = remove_redundant(intersect_h(prefix, lifted), tol, method)
    logger.info("singular H branch: reduced k_bar=%d, %d rows", reduced.k_bar, phi.rows)
    return _result(phi, reduced.k_bar, started, "singular", horizon=h, reduced=reduced, split=split)


def mpi_singular_cz(
    A_cl,
    Xbar_cz: ConstrainedZonotope,
    Xbar_h: HPolyhedron,
    opts: Optional[MPIOptions] = None,
    split: Optional[SchurSplit] = None
) -> MPIResult:
    """Zonotope form of the singular branch; the lift is one generalized intersection"""
    opts = opts or MPIOptions()
    started = time.perf_counter()
    A = _prepare(A_cl, Xbar_cz.dim)
    if Xbar_h.dim != Xbar_cz.dim:
        raise DimensionMismatchError("half-space and zonotope forms of the constraint set differ in dimension")
    validate_constraint_set(Xbar_h, opts)
    split = split or schur_split(A, opts.eps_zero, opts.tol_nil)
    h = split.horizon(opts.p_offset)

    prefix, early = _forward_prefix_cz(A, Xbar_cz, Xbar_h, h, opts)
    if early is not None:
        logger.info("singular CZ branch: constraints stop at k=%d before the lift", early)
        return _result(prefix, early, started, "singular", horizon=h, split=split)
    if split.d1 == 0:
        return _result(prefix, h - 1, started, "singular", horizon=h, split=split)

    Z_cz = reduced_constraints_cz(split, Xbar_cz)
    Z_h = reduced_constraints_h(split, Xbar_h)
    reduced = mpi_standard_cz(split.S11, Z_cz, Z_h, opts)
    phi = cz_generalized_intersect(prefix, reduced.set, split.lift_map(opts.p_offset))
    logger.info("singular CZ branch: reduced k_bar=%d, D=%d, n_c=%d", reduced.k_bar, phi.order, phi.n_constraints)
    return _result(phi, reduced.k_bar, started, "singular", horizon=h, reduced=reduced, split=split)


# ---------------------------------------------------------------------------
# Oracle and dispatcher
# ---------------------------------------------------------------------------

def mpi_oracle_forward(
    A_cl,
    Xbar: HPolyhedron,
    k_max: Optional[int] = None,
    opts: Optional[MPIOptions] = None
) -> MPIResult:
    """
    Intersection of {A^k x in Xbar} over k >= 0 using forward powers only,
    so singular closed loops are handled without any inverse. Xbar need not
    be bounded; the loop stops once the rows of some step are implied.
    """
    opts = opts or MPIOptions()
    k_max = opts.k_max if k_max is None else k_max
    started = time.perf_counter()
    A = _prepare(A_cl, Xbar.dim)
    validate_constraint_set(Xbar, opts, bounded=False)

    omega, k_bar = _forward_prefix_h(A, Xbar, k_max + 1, opts)
    if k_bar is None:
        raise IterationCapExceededError(f"forward oracle found no fixed point within k_max={k_max}")
    logger.info("forward oracle: fixed point at k=%d with %d rows", k_bar, omega.rows)
    return _result(omega, k_bar, started, "oracle")


def _as_hpoly(S: SetType, label: str) -> HPolyhedron:
    if isinstance(S, HPolyhedron):
        return S
    try:
        return S.to_hpoly()
    except InputValidationError as e:
        raise InputValidationError(f"{label}: {e.message}; supply a box, an H-polyhedron or a parallelotope")


def _as_cz(S: SetType, opts: MPIOptions) -> ConstrainedZonotope:
    if isinstance(S, ConstrainedZonotope):
        return S
    return ConstrainedZonotope.from_hpoly(S, opts.tol_feas, opts.lp_backend)


def mpi_compute(
    A,
    B,
    K,
    X: SetType,
    Uc: SetType,
    backend: str = "hpoly",
    opts: Optional[MPIOptions] = None
) -> MPIResult:
    """
    Build the closed loop A + sign B K and its tightened constraint set, then
    run the standard or singular branch on the chosen backend

    Args:
        A, B, K: Open-loop pair and feedback gain
        X, Uc: State and input constraint sets
        backend: "hpoly" or "czono"
        opts: Numerical options (sign convention included)
    """
    opts = opts or MPIOptions()
    system = LTISystem(A, B, K, opts.sign)
    A_cl = system.closed_loop()
    K_eff = system.effective_gain

    X_h, U_h = _as_hpoly(X, "X"), _as_hpoly(Uc, "U")
    if X_h.dim != system.n or U_h.dim != system.m:
        raise DimensionMismatchError(
            f"constraint sets live in R^{X_h.dim} and R^{U_h.dim}, system has n={system.n}, m={system.m}"
        )
    Xbar_h = closed_loop_constraints_h(X_h, U_h, K_eff)
    split = singular_split(A_cl, opts)
    logger.info("mpi_compute: n=%d, m=%d, backend=%s, branch=%s",
                system.n, system.m, backend, "standard" if split is None else "singular")

    if backend == "hpoly":
        if split is not None:
            return mpi_singular_h(A_cl, Xbar_h, opts, split)
        return mpi_standard_h(A_cl, Xbar_h, opts)
    if backend == "czono":
        Xbar_cz = closed_loop_constraints_cz(_as_cz(X, opts), _as_cz(Uc, opts), K_eff)
        if split is not None:
            return mpi_singular_cz(A_cl, Xbar_cz, Xbar_h, opts, split)
        return mpi_standard_cz(A_cl, Xbar_cz, Xbar_h, opts)
    raise InputValidationError(f"unknown backend: {backend}")

