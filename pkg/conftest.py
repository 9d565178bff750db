"""
Shared fixtures: the two-state benchmark system, the six-state singular
example, and generators of random closed loops with zero eigenvalues
"""
from pathlib import Path

import numpy as np
import pytest

from lpcore import support_point_cz, support_point_hpoly
from polyset import HPolyhedron
from settings import MPIOptions

A2 = np.array([[1.38, 0.76], [0.16, 1.87]])
B2 = np.array([[1.0], [1.0]])
K_RICCATI = np.array([[2.73, -0.80]])
K_PLACEMENT = np.array([[1.43, 0.16]])

A6 = np.array([
    [-14.85, -5.20, -14.75, -11.90, -20.10, -14.55],
    [-8.85, 0.10, -12.95, -9.20, -10.20, -13.15],
    [9.90, 6.60, 10.30, 6.80, 13.80, 10.10],
    [-14.95, -7.50, -13.85, -10.20, -21.00, -13.65],
    [-18.40, -5.70, -26.40, -17.70, -23.10, -26.40],
    [-12.35, -3.80, -21.85, -13.30, -14.90, -21.85],
])
B6 = np.array([[1, 4], [3, 4], [0, 0], [0, 2], [4, 4], [4, 2]], dtype=float)
K6 = np.array([[1, 0, 4, 2, 1, 4], [3, 1, 2, 2, 4, 2]], dtype=float)
S11_REFERENCE = np.array([[0.70, -0.87, 0.49], [0.0, 0.50, 0.12], [0.0, 0.0, 0.20]])
T_REFERENCE = np.array([[-0.30, 33.06, -11.76], [-0.22, 2.23, -0.82], [-0.39, 0.76, -0.15]])


def nilpotent(cells):
    """Block-diagonal nilpotent matrix with Jordan cells of the given sizes"""
    n = sum(cells)
    N = np.zeros((n, n))
    k = 0
    for size in cells:
        for i in range(size - 1):
            N[k + i, k + i + 1] = 1.0
        k += size
    return N


def random_singular_system(seed: int, d1: int, cells, rho: float = 0.7, coupling: float = 0.3):
    """
    Q [[S11, S12], [0, N]] Q^T with S11 stable upper triangular (distinct
    real eigenvalues), N nilpotent with the given Jordan cells and Q a random
    orthogonal matrix
    """
    rng = np.random.default_rng(seed)
    d2 = sum(cells)
    n = d1 + d2
    mags = np.sort(rng.uniform(0.2, rho, d1))[::-1]
    # keep magnitudes apart so the ordering is well defined
    mags = mags + 0.02 * np.arange(d1)[::-1] / max(d1, 1)
    S11 = np.diag(mags * rng.choice([-1.0, 1.0], d1)) + np.triu(coupling * rng.standard_normal((d1, d1)), 1)
    S12 = coupling * rng.standard_normal((d1, d2))
    S = np.block([[S11, S12], [np.zeros((d2, d1)), nilpotent(cells)]])
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ S @ Q.T


RANDOM_CASES = [
    (0, 2, [1]),
    (1, 2, [2]),
    (2, 3, [1]),
    (3, 3, [2]),
    (4, 2, [1, 1]),
    (5, 3, [1, 2]),
    (6, 1, [3]),
    (7, 4, [1]),
    (8, 4, [2]),
    (9, 3, [3]),
    (10, 2, [1, 2]),
    (11, 3, [1, 1]),
    (12, 1, [2]),
    (13, 2, [3]),
    (14, 4, [1, 1]),
    (15, 3, [2, 1]),
    (16, 5, [1]),
    (17, 2, [2, 2]),
    (18, 1, [1, 1, 1]),
    (19, 3, [1, 1, 1]),
    (20, 4, [2]),
]


@pytest.fixture
def opts():
    return MPIOptions()


@pytest.fixture
def unit_box():
    def make(n: int) -> HPolyhedron:
        return HPolyhedron.box(np.ones(n))
    return make


@pytest.fixture
def table_system():
    return A2, B2


@pytest.fixture
def six_state_closed_loop():
    return A6 + B6 @ K6


@pytest.fixture
def six_state_constraints():
    """One-sided bounds x <= 1, K x <= 1: eight rows, unbounded in R^6"""
    F = np.vstack((np.eye(6), K6))
    return HPolyhedron(F, np.ones(8))


@pytest.fixture
def six_state_box_constraints():
    """Unit boxes on state and input tightened by u = K x"""
    I6 = np.eye(6)
    F = np.vstack((I6, -I6, K6, -K6))
    return HPolyhedron(F, np.ones(F.shape[0]))


def sample_interior(P, count: int, rng, directions: int = 40, method: str = "simplex"):
    """Random convex combinations of support points of a bounded set"""
    points = []
    for _ in range(directions):
        d = rng.standard_normal(P.dim)
        _, x = support_point_hpoly(P, d / np.linalg.norm(d), method=method)
        points.append(x)
    V = np.array(points)
    W = rng.dirichlet(np.ones(len(V)), size=count)
    return W @ V


def sample_zonotope(Z, count: int, rng, directions: int = 40):
    """Random convex combinations of support points of a constrained zonotope"""
    V = np.array([support_point_cz(Z, d)[1] for d in rng.standard_normal((directions, Z.dim))])
    W = rng.dirichlet(np.ones(len(V)), size=count)
    return W @ V


PROBLEMS_DIR = Path(__file__).parent / "problems"


@pytest.fixture
def two_state_problem():
    """Problem document of the two-state system with the Riccati gain"""
    return {
        'schema': 1,
        'name': 'two-state',
        'A': A2.tolist(),
        'B': B2.tolist(),
        'gain': {'type': 'literal', 'K': K_RICCATI.tolist()},
        'sign_convention': -1,
        'X': {'type': 'box', 'radii': [1.0, 1.0]},
        'U': {'type': 'box', 'radii': [1.0]},
        'backend': 'hpoly',
        'opts': {}
    }


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full benchmark sweeps (deselect with -m 'not slow')")
