"""
Problem File Module
JSON problem documents (schema 1): system matrices, gain, constraint sets,
backend and options. Matrices are stored as nested arrays of decimal strings.
"""
import json
import logging
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PlainSerializer, ValidationError, model_validator

from czset import ConstrainedZonotope
from errors import InputValidationError
from mpi import LTISystem, MPIResult
from polyset import HPolyhedron
from settings import MPIOptions
from synthesis import DareSpec, dare_gain

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _decimal(x: float) -> str:
    # repr is the shortest string that parses back to the same double
    return repr(float(x))


Vector = Annotated[List[float], PlainSerializer(lambda v: [_decimal(x) for x in v], when_used="json")]
Matrix = Annotated[
    List[List[float]],
    PlainSerializer(lambda M: [[_decimal(x) for x in row] for row in M], when_used="json")
]
Weight = Annotated[
    Union[float, List[List[float]]],
    PlainSerializer(
        lambda W: _decimal(W) if isinstance(W, (int, float)) else [[_decimal(x) for x in row] for row in W],
        when_used="json"
    )
]


class BoxSet(BaseModel):
    type: Literal["box"] = "box"
    radii: Vector
    center: Optional[Vector] = None

    @property
    def dim(self) -> int:
        return len(self.radii)


class HPolySet(BaseModel):
    type: Literal["hpoly"] = "hpoly"
    F: Matrix
    theta: Vector

    @model_validator(mode="after")
    def _check_shape(self) -> "HPolySet":
        if not self.F or len(self.F) != len(self.theta) or len({len(row) for row in self.F}) != 1:
            raise ValueError("F must have one row of equal length per entry of theta")
        return self

    @property
    def dim(self) -> int:
        return len(self.F[0]) if self.F else 0


class CZonoSet(BaseModel):
    type: Literal["czono"] = "czono"
    c: Vector
    G: Matrix
    F_eq: Matrix = Field(default_factory=list)
    theta_eq: Vector = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_shape(self) -> "CZonoSet":
        D = len(self.G[0]) if self.G else 0
        if len(self.G) != len(self.c) or any(len(row) != D for row in self.G):
            raise ValueError("G must have one row per entry of c, all of equal length")
        if len(self.F_eq) != len(self.theta_eq) or any(len(row) != D for row in self.F_eq):
            raise ValueError("F_eq must have one row per entry of theta_eq and one column per generator")
        return self

    @property
    def dim(self) -> int:
        return len(self.c)


SetSpec = Annotated[Union[BoxSet, HPolySet, CZonoSet], Field(discriminator="type")]


class LiteralGain(BaseModel):
    type: Literal["literal"] = "literal"
    K: Matrix


class DareGain(BaseModel):
    type: Literal["dare"] = "dare"
    Q: Weight = 1.0
    R: Weight = 1.0
    max_iter: int = Field(10000, ge=1)
    tol: float = Field(1e-10, gt=0)


GainSpec = Annotated[Union[LiteralGain, DareGain], Field(discriminator="type")]


class ProblemFile(BaseModel):
    """One MPI problem: x+ = (A + sign B K) x subject to x in X, K x in U"""
    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal[1] = Field(SCHEMA_VERSION, alias="schema")
    name: Optional[str] = None
    A: Matrix
    B: Matrix
    gain: GainSpec
    sign_convention: Literal[1, -1] = 1
    X: SetSpec
    U: SetSpec
    backend: Literal["hpoly", "czono"] = "hpoly"
    opts: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ProblemFile":
        n = len(self.A)
        if any(len(row) != n for row in self.A):
            raise ValueError("A must be square")
        if len(self.B) != n or len({len(row) for row in self.B}) != 1:
            raise ValueError("B must have n rows of equal length")
        m = len(self.B[0])
        if isinstance(self.gain, LiteralGain):
            if len(self.gain.K) != m or any(len(row) != n for row in self.gain.K):
                raise ValueError(f"K must be {m}x{n}")
        if self.X.dim != n:
            raise ValueError(f"X lives in R^{self.X.dim}, A is {n}x{n}")
        if self.U.dim != m:
            raise ValueError(f"U lives in R^{self.U.dim}, B has {m} columns")
        unknown = set(self.opts) - set(MPIOptions.model_fields)
        if unknown:
            raise ValueError(f"unknown options: {sorted(unknown)}")
        return self

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def m(self) -> int:
        return len(self.B[0])

    def gain_matrix(self) -> np.ndarray:
        """Literal K, or the Riccati gain for the configured weights"""
        if isinstance(self.gain, LiteralGain):
            return np.array(self.gain.K, dtype=float)
        g = self.gain
        Q = g.Q * np.eye(self.n) if isinstance(g.Q, (int, float)) else np.array(g.Q, dtype=float)
        R = g.R * np.eye(self.m) if isinstance(g.R, (int, float)) else np.array(g.R, dtype=float)
        K, _ = dare_gain(np.array(self.A, dtype=float), np.array(self.B, dtype=float),
                         DareSpec(Q, R, g.max_iter, g.tol))
        # Riccati gains follow u = K x
        return self.sign_convention * K

    def system(self) -> LTISystem:
        return LTISystem(self.A, self.B, self.gain_matrix(), self.sign_convention)

    def options(self, base: Optional[MPIOptions] = None, **overrides) -> MPIOptions:
        """Environment/base options, then the file's opts, then explicit overrides"""
        base = base or MPIOptions.from_env()
        return base.merged(**{**self.opts, "sign": self.sign_convention}).merged(**overrides)


def build_set(spec: Union[BoxSet, HPolySet, CZonoSet]) -> Union[HPolyhedron, ConstrainedZonotope]:
    if isinstance(spec, BoxSet):
        return HPolyhedron.box(spec.radii, spec.center)
    if isinstance(spec, HPolySet):
        return HPolyhedron(spec.F, spec.theta)
    # empty F_eq and theta_eq give a plain zonotope
    return ConstrainedZonotope(spec.c, spec.G, spec.F_eq, spec.theta_eq)


def parse_problem(data: dict) -> ProblemFile:
    try:
        return ProblemFile.model_validate(data)
    except ValidationError as e:
        raise InputValidationError("invalid problem file", {'errors': e.errors(include_url=False, include_context=False)})


def load_problem(path: Union[str, Path]) -> ProblemFile:
    """
    Read and validate a problem file

    Raises:
        InputValidationError: unreadable file, bad JSON or schema violation
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputValidationError(f"cannot read problem file {path}: {e}")
    problem = parse_problem(data)
    logger.info("loaded problem %s (n=%d, m=%d, backend=%s)", problem.name or path.name,
                problem.n, problem.m, problem.backend)
    return problem


def dump_problem(problem: ProblemFile) -> dict:
    return problem.model_dump(mode="json", by_alias=True)


def save_problem(problem: ProblemFile, path: Union[str, Path]):
    Path(path).write_text(json.dumps(dump_problem(problem), indent=2) + "\n")


def build_report(
    problem: ProblemFile,
    system: LTISystem,
    result: MPIResult,
    opts: MPIOptions,
    include_set: bool = True
) -> dict:
    """Result document written by `compute` and returned by the service"""
    poles = np.linalg.eigvals(system.closed_loop())
    return {
        'schema': SCHEMA_VERSION,
        'name': problem.name,
        'n': problem.n,
        'm': problem.m,
        'K': system.K.tolist(),
        'closed_loop_poles': [[float(z.real), float(z.imag)] for z in sorted(poles, key=lambda z: (-abs(z), z.imag))],
        'opts': opts.model_dump(),
        'result': result.to_dict(include_set)
    }
