"""
Tests for the MPI recurrences: standard and singular branches on both
backends, the forward-power oracle and the Schur split
"""
import numpy as np
import pytest

from conftest import (
    A2, A6, B2, B6, K6, K_PLACEMENT, K_RICCATI, RANDOM_CASES, S11_REFERENCE, T_REFERENCE,
    nilpotent, random_singular_system, sample_interior, sample_zonotope,
)
from czset import ConstrainedZonotope
from errors import (
    DimensionMismatchError,
    EmptySetError,
    InputValidationError,
    IterationCapExceededError,
    NoZeroEigenvaluesError,
    SingularDynamicsError,
    UnboundedSetError,
)
from mpi import (
    LTISystem,
    constraint_subspace_bound,
    lift_kernel_directions,
    mpi_compute,
    mpi_oracle_forward,
    mpi_singular_cz,
    mpi_singular_h,
    mpi_standard_h,
    reduced_constraints_h,
    schur_split,
    singular_split,
)
from polyset import HPolyhedron, closed_loop_constraints_h, contains_h, equals_h, preimage_linear_h
from settings import MPIOptions


def unit_directions(n, count=100, seed=0):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((count, n))
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def assert_invariant(A, omega, Xbar, seed=0, count=1000):
    """Sampled points of omega stay in Xbar and map back into omega"""
    rng = np.random.default_rng(seed)
    for x in sample_interior(omega, count, rng):
        assert Xbar.contains_point(x, 1e-7)
        assert omega.contains_point(A @ x, 1e-7)


def assert_invariant_lp(A, omega, Xbar):
    """omega inside Xbar and inside its own preimage; also holds for unbounded omega"""
    assert contains_h(Xbar, omega, 1e-7)
    assert contains_h(preimage_linear_h(omega, A), omega, 1e-7)


def assert_zonotope_invariant(A, Z, omega_h, Xbar, seed=0, count=1000):
    """Points of a constrained-zonotope result stay in Xbar and map into the matching H-form set"""
    rng = np.random.default_rng(seed)
    for x in sample_zonotope(Z, count, rng):
        assert Xbar.contains_point(x, 1e-6)
        assert omega_h.contains_point(A @ x, 1e-6)


# ---------------------------------------------------------------------------
# System
# ---------------------------------------------------------------------------

def test_lti_system_closed_loop():
    system = LTISystem(A2, B2, K_RICCATI, sign=-1)
    assert (system.n, system.m) == (2, 1)
    assert np.allclose(system.closed_loop(), [[-1.35, 1.56], [-2.57, 2.67]], atol=1e-12)
    assert np.allclose(system.effective_gain, -K_RICCATI)


def test_lti_system_validation():
    with pytest.raises(DimensionMismatchError):
        LTISystem(A2, np.ones((3, 1)))
    with pytest.raises(DimensionMismatchError):
        LTISystem(A2, B2, np.ones((1, 3)))
    with pytest.raises(InputValidationError):
        LTISystem(A2, B2, K_RICCATI, sign=2)


# ---------------------------------------------------------------------------
# Standard branch on the two-state system
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("K,poles,k_bar", [
    (K_RICCATI, [0.836, 0.484], 3),
    (K_PLACEMENT, [0.941, 0.719], 7),
])
def test_two_state_gains(K, poles, k_bar):
    opts = MPIOptions(sign=-1)
    system = LTISystem(A2, B2, K, sign=-1)
    ev = np.sort(np.abs(np.linalg.eigvals(system.closed_loop())))[::-1]
    assert np.allclose(ev, poles, atol=0.02)

    result = mpi_compute(A2, B2, K, HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0]), opts=opts)
    assert result.branch == "standard"
    assert result.k_bar == k_bar
    Xbar = closed_loop_constraints_h(HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0]), system.effective_gain)
    assert_invariant(system.closed_loop(), result.set, Xbar)


def test_standard_h_matches_oracle():
    A_cl = LTISystem(A2, B2, K_PLACEMENT, sign=-1).closed_loop()
    Xbar = closed_loop_constraints_h(HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0]), -K_PLACEMENT)
    std = mpi_standard_h(A_cl, Xbar)
    oracle = mpi_oracle_forward(A_cl, Xbar)
    assert std.k_bar == oracle.k_bar
    assert equals_h(std.set, oracle.set, 1e-6)


@pytest.mark.parametrize("K", [K_RICCATI, K_PLACEMENT])
def test_backends_agree_on_two_state_system(K):
    opts = MPIOptions(sign=-1)
    X, U = HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0])
    h = mpi_compute(A2, B2, K, X, U, backend="hpoly", opts=opts)
    z = mpi_compute(A2, B2, K, X, U, backend="czono", opts=opts)
    assert z.backend == "czono" and z.generators >= 2
    assert z.k_bar == h.k_bar
    for d in unit_directions(2):
        assert abs(z.set.support(d) - h.set.support(d)) < 1e-6
    A_cl = LTISystem(A2, B2, K, sign=-1).closed_loop()
    assert_zonotope_invariant(A_cl, z.set, h.set, closed_loop_constraints_h(X, U, -K))


def test_standard_rejects_singular_dynamics():
    with pytest.raises(SingularDynamicsError):
        mpi_standard_h(np.diag([0.5, 0.0]), HPolyhedron.box([1.0, 1.0]))


def test_iteration_cap():
    opts = MPIOptions(sign=-1, k_max=2)
    with pytest.raises(IterationCapExceededError) as err:
        mpi_compute(A2, B2, K_PLACEMENT, HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0]), opts=opts)
    assert err.value.exit_code == 4


def test_constraint_set_checks():
    A = np.diag([0.5, 0.4])
    with pytest.raises(UnboundedSetError):
        mpi_standard_h(A, HPolyhedron([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]))
    with pytest.raises(UnboundedSetError):
        mpi_standard_h(A, HPolyhedron.box([1.0, 1.0], center=[1.0, 0.0]))
    with pytest.raises(EmptySetError):
        mpi_standard_h(A, HPolyhedron([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0]))
    with pytest.raises(DimensionMismatchError):
        mpi_standard_h(A, HPolyhedron.box(np.ones(3)))


def test_unknown_backend():
    with pytest.raises(InputValidationError):
        mpi_compute(A2, B2, K_RICCATI, HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0]),
                    backend="vrep", opts=MPIOptions(sign=-1))


# ---------------------------------------------------------------------------
# Schur split on the six-state example
# ---------------------------------------------------------------------------

def test_six_state_split(six_state_closed_loop):
    split = schur_split(six_state_closed_loop)
    assert (split.d1, split.d2, split.p) == (3, 3, 1)
    assert split.horizon() == 2 and split.horizon(2) == 4
    assert split.jordan_cells == [(1, 1), (2, 1)]
    assert np.allclose(np.abs(split.S11), np.abs(S11_REFERENCE), atol=1e-2)
    sv = np.linalg.svd(split.T, compute_uv=False)
    sv_reference = np.linalg.svd(T_REFERENCE, compute_uv=False)
    assert np.allclose(sv, sv_reference, atol=0.05)
    assert np.linalg.norm(split.U @ split.S @ split.U.T - six_state_closed_loop) <= 1e-9 * np.linalg.norm(A6)


def test_lift_map_matches_powers(six_state_closed_loop):
    """U1^T A^h = L on the whole space once the trailing block has vanished"""
    split = schur_split(six_state_closed_loop)
    for offset in (0, 1, 2):
        h = split.horizon(offset)
        L = split.lift_map(offset)
        expected = split.U1.T @ np.linalg.matrix_power(six_state_closed_loop, h)
        assert np.linalg.norm(L - expected) <= 1e-7 * np.linalg.norm(expected)


def test_split_requires_zero_eigenvalues():
    with pytest.raises(NoZeroEigenvaluesError):
        schur_split(np.diag([0.5, 0.3]))


ILL_CONDITIONED = np.array([[0.5, 1e5], [0.0, 0.2]])


def test_split_rejects_ill_conditioned_invertible_matrix():
    """A tiny singular value flags the rank test, but the eigenvalues 0.5 and 0.2 are far from zero"""
    with pytest.raises(NoZeroEigenvaluesError) as err:
        schur_split(ILL_CONDITIONED)
    assert err.value.detail['max_abs_eigenvalue'] == pytest.approx(0.2, abs=1e-9)
    assert singular_split(ILL_CONDITIONED) is None
    assert singular_split(A6 + B6 @ K6).d2 == 3


def test_ill_conditioned_closed_loop_takes_standard_branch():
    X, U = HPolyhedron.box([1.0, 1.0]), HPolyhedron.box([1.0])
    result = mpi_compute(ILL_CONDITIONED, np.zeros((2, 1)), np.zeros((1, 2)), X, U)
    assert result.branch == "standard" and result.split is None
    assert equals_h(result.set, mpi_oracle_forward(ILL_CONDITIONED, X).set, 1e-6)
    assert equals_h(mpi_standard_h(ILL_CONDITIONED, X).set, result.set, 1e-6)


def test_six_state_reduced_constraints(six_state_closed_loop, six_state_constraints):
    split = schur_split(six_state_closed_loop)
    Z = reduced_constraints_h(split, six_state_constraints)
    assert (Z.dim, Z.rows) == (3, 8)
    assert Z.is_bounded()
    assert not six_state_constraints.is_bounded()
    assert mpi_standard_h(split.S11, Z).k_bar == 3
    rng = np.random.default_rng(4)
    for z in rng.uniform(-2.0, 2.0, (200, 3)):
        assert Z.contains_point(z) == six_state_constraints.contains_point(split.U1 @ z)


def test_six_state_singular_branch(six_state_closed_loop, six_state_constraints):
    result = mpi_singular_h(six_state_closed_loop, six_state_constraints)
    assert result.branch == "singular"
    assert result.horizon == 2
    assert result.reduced.k_bar == 3
    assert result.k_bar == result.reduced.k_bar
    oracle = mpi_oracle_forward(six_state_closed_loop, six_state_constraints)
    assert equals_h(result.set, oracle.set, 1e-6)
    assert_invariant_lp(six_state_closed_loop, result.set, six_state_constraints)
    split = result.split
    assert_invariant(split.S11, result.reduced.set, reduced_constraints_h(split, six_state_constraints))


def test_six_state_standard_rejects_unbounded_constraints(six_state_constraints):
    with pytest.raises(UnboundedSetError):
        mpi_standard_h(np.diag([0.7, 0.5, 0.2, 0.1, -0.3, 0.4]), six_state_constraints)


def test_six_state_box_singular_branch(six_state_closed_loop, six_state_box_constraints):
    """The two-sided box has sixteen rows; its reduced recurrence stops one step earlier"""
    result = mpi_singular_h(six_state_closed_loop, six_state_box_constraints)
    assert result.reduced.k_bar == 2
    oracle = mpi_oracle_forward(six_state_closed_loop, six_state_box_constraints)
    assert equals_h(result.set, oracle.set, 1e-6)
    assert_invariant(six_state_closed_loop, result.set, six_state_box_constraints)


def test_six_state_dispatch(six_state_constraints):
    X, U = HPolyhedron(np.eye(6), np.ones(6)), HPolyhedron(np.eye(2), np.ones(2))
    result = mpi_compute(A6, B6, K6, X, U)
    assert result.branch == "singular"
    assert result.reduced.k_bar == 3
    assert equals_h(result.set, mpi_oracle_forward(A6 + B6 @ K6, six_state_constraints).set, 1e-6)
    report = result.to_dict(include_set=False)
    assert report['split']['jordan_cells'] == [[1, 1], [2, 1]]
    assert 'set' not in report and report['q_bar'] == result.row_count


def test_six_state_backends_agree(six_state_closed_loop, six_state_box_constraints):
    h = mpi_compute(A6, B6, K6, HPolyhedron.box(np.ones(6)), HPolyhedron.box(np.ones(2)))
    z = mpi_compute(A6, B6, K6, HPolyhedron.box(np.ones(6)), HPolyhedron.box(np.ones(2)), backend="czono")
    assert z.branch == "singular" and z.backend == "czono"
    for d in unit_directions(6):
        assert abs(z.set.support(d) - h.set.support(d)) < 1e-6
    assert_zonotope_invariant(six_state_closed_loop, z.set, h.set, six_state_box_constraints)


def test_lifted_set_unbounded_along_kernel(six_state_closed_loop, six_state_box_constraints):
    """The lifted reduced set alone has no bound along the lift kernel"""
    result = mpi_singular_h(six_state_closed_loop, six_state_box_constraints)
    split = result.split
    W = lift_kernel_directions(split)
    assert W.shape == (6, 3)
    L = split.lift_map()
    assert np.linalg.norm(L @ W) <= 1e-8 * np.linalg.norm(L) * np.linalg.norm(W)
    lifted = preimage_linear_h(result.reduced.set, L)
    for w in W.T:
        assert lifted.support(w) > 1e6
        assert lifted.support(-w) > 1e6
    # the prefix supplies the bound
    for w in W.T:
        assert np.isfinite(result.set.support(w))


def test_constraint_rows_rank_bound(six_state_closed_loop, six_state_box_constraints):
    split = schur_split(six_state_closed_loop)
    F = six_state_box_constraints.F
    for k in range(1, 5):
        rows = F @ np.linalg.matrix_power(six_state_closed_loop, k)
        s = np.linalg.svd(rows, compute_uv=False)
        rank = int(np.sum(s > 1e-7 * s[0]))
        assert rank <= constraint_subspace_bound(split, k)
    assert constraint_subspace_bound(split, 3) == 3


# ---------------------------------------------------------------------------
# Singular branch against the forward oracle on random closed loops
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed,d1,cells", RANDOM_CASES)
def test_singular_matches_oracle(seed, d1, cells):
    A = random_singular_system(seed, d1, cells)
    Xbar = HPolyhedron.box(np.ones(A.shape[0]))
    result = mpi_singular_h(A, Xbar)
    oracle = mpi_oracle_forward(A, Xbar)
    assert equals_h(result.set, oracle.set, 1e-6)
    assert_invariant(A, result.set, Xbar, seed=seed)


@pytest.mark.parametrize("seed,d1,cells", RANDOM_CASES[:10])
def test_singular_cz_matches_hpoly(seed, d1, cells):
    A = random_singular_system(seed, d1, cells)
    n = A.shape[0]
    Xh = HPolyhedron.box(np.ones(n))
    h = mpi_singular_h(A, Xh)
    z = mpi_singular_cz(A, ConstrainedZonotope.box(np.ones(n)), Xh)
    for d in unit_directions(n, seed=seed):
        assert abs(z.set.support(d) - h.set.support(d)) < 1e-6
    assert_zonotope_invariant(A, z.set, h.set, Xh, seed=seed)


def test_p_offset_gives_same_set():
    A = random_singular_system(3, 3, [2])
    Xbar = HPolyhedron.box(np.ones(5))
    base = mpi_singular_h(A, Xbar)
    padded = mpi_singular_h(A, Xbar, MPIOptions(p_offset=2))
    assert padded.horizon == base.horizon + 2
    assert equals_h(base.set, padded.set, 1e-6)


def test_dead_beat_closed_loop():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    A = Q @ (2.0 * nilpotent([2, 1])) @ Q.T
    Xbar = HPolyhedron.box(np.ones(3))
    result = mpi_singular_h(A, Xbar)
    assert result.split.d1 == 0
    assert result.k_bar == 1
    assert result.reduced is None
    assert equals_h(result.set, mpi_oracle_forward(A, Xbar).set, 1e-6)


def test_early_exit_before_lift():
    """Constraints of the first step are already implied by the box"""
    result = mpi_singular_h(np.diag([0.5, 0.0]), HPolyhedron.box([1.0, 1.0]))
    assert result.k_bar == 0
    assert result.reduced is None
    assert equals_h(result.set, HPolyhedron.box([1.0, 1.0]))
