"""
Tests for problem documents: validation, decimal-string round trip,
gain resolution and option precedence
"""
import json

import numpy as np
import pytest

from conftest import A2, B2, PROBLEMS_DIR
from errors import InputValidationError
from polyset import HPolyhedron
from problem_file import build_set, dump_problem, load_problem, parse_problem, save_problem
from settings import MPIOptions


def test_parse_two_state(two_state_problem):
    problem = parse_problem(two_state_problem)
    assert (problem.n, problem.m) == (2, 1)
    system = problem.system()
    assert np.allclose(system.closed_loop(), [[-1.35, 1.56], [-2.57, 2.67]], atol=1e-12)


def test_round_trip_is_bit_identical(two_state_problem, tmp_path):
    two_state_problem['A'] = [[0.1 + 0.2, 1.0 / 3.0], [2.0 ** -40, -7.123456789012345]]
    problem = parse_problem(two_state_problem)
    path = tmp_path / "p.json"
    save_problem(problem, path)
    data = json.loads(path.read_text())
    assert data['schema'] == 1
    assert all(isinstance(x, str) for row in data['A'] for x in row)
    again = load_problem(path)
    assert np.array_equal(np.array(again.A), np.array(problem.A))
    assert dump_problem(again) == dump_problem(problem)


@pytest.mark.parametrize("field,value", [
    ('A', [[1.0, 2.0]]),
    ('B', [[1.0], [1.0], [1.0]]),
    ('X', {'type': 'box', 'radii': [1.0, 1.0, 1.0]}),
    ('U', {'type': 'box', 'radii': [1.0, 1.0]}),
    ('gain', {'type': 'literal', 'K': [[1.0, 2.0, 3.0]]}),
    ('gain', {'type': 'pole'}),
    ('sign_convention', 2),
    ('schema', 2),
    ('opts', {'k_maximum': 3}),
    ('backend', 'vrep'),
    ('X', {'type': 'czono', 'c': [0.0, 0.0], 'G': [[1.0, 0.0], [0.0, 1.0]], 'F_eq': [[1.0]], 'theta_eq': [0.0]}),
    ('X', {'type': 'czono', 'c': [0.0, 0.0], 'G': [[1.0, 0.0]]}),
    ('X', {'type': 'hpoly', 'F': [[1.0, 0.0], [0.0]], 'theta': [1.0, 1.0]}),
])
def test_validation_errors(two_state_problem, field, value):
    two_state_problem[field] = value
    with pytest.raises(InputValidationError) as err:
        parse_problem(two_state_problem)
    assert err.value.exit_code == 2


def test_unreadable_file(tmp_path):
    with pytest.raises(InputValidationError):
        load_problem(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputValidationError):
        load_problem(bad)


def test_dare_gain_follows_sign_convention(two_state_problem):
    two_state_problem['gain'] = {'type': 'dare', 'Q': 1.0, 'R': 1.0}
    problem = parse_problem(two_state_problem)
    system = problem.system()
    assert system.sign == -1
    assert np.max(np.abs(np.linalg.eigvals(system.closed_loop()))) < 1.0
    assert np.allclose(system.effective_gain, -problem.gain_matrix())


def test_dare_matrix_weights(two_state_problem):
    two_state_problem['gain'] = {'type': 'dare', 'Q': [[2.0, 0.0], [0.0, 1.0]], 'R': [[0.5]]}
    two_state_problem['sign_convention'] = 1
    K = parse_problem(two_state_problem).gain_matrix()
    assert np.max(np.abs(np.linalg.eigvals(A2 + B2 @ K))) < 1.0


def test_option_precedence(two_state_problem, monkeypatch):
    monkeypatch.setenv("MPI_K_MAX", "50")
    monkeypatch.setenv("MPI_TOL_FEAS", "1e-7")
    two_state_problem['opts'] = {'k_max': 40}
    problem = parse_problem(two_state_problem)
    base = MPIOptions.from_env()
    opts = problem.options(base)
    assert opts.k_max == 40 and opts.tol_feas == 1e-7 and opts.sign == -1
    assert problem.options(base, k_max=30).k_max == 30
    assert problem.options(base, k_max=None).k_max == 40


def test_build_sets(two_state_problem):
    X = build_set(parse_problem(two_state_problem).X)
    assert isinstance(X, HPolyhedron) and X.rows == 4
    two_state_problem['X'] = {'type': 'czono', 'c': [0.0, 0.0], 'G': [[1.0, 0.0], [0.0, 1.0]]}
    Z = build_set(parse_problem(two_state_problem).X)
    assert Z.n_constraints == 0 and abs(Z.support([1.0, 1.0]) - 2.0) < 1e-12


@pytest.mark.parametrize("name", ["two_state_riccati.json", "two_state_placement.json", "six_state_singular.json"])
def test_shipped_problems_load(name):
    problem = load_problem(PROBLEMS_DIR / name)
    assert problem.system().closed_loop().shape == (problem.n, problem.n)
