"""
CSE Model Module
Coupled spring experiment: a chain of masses linked by springs and dampers,
driven by two forces at its ends, discretized by forward Euler
"""
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from errors import InvalidParamsError
from mpi import LTISystem


class CSEParams(BaseModel):
    """Chain parameters; the defaults are the benchmark's"""
    l: int = Field(..., ge=2, description="Number of masses")
    mu: float = Field(4.0, gt=0, description="Mass")
    delta: float = Field(1.0, description="Damping")
    k: float = Field(1.0, description="Spring stiffness")
    Ts: float = Field(1.0, ge=0, description="Sampling time in seconds")
    kc_variant: Literal["benchmark", "standard"] = "benchmark"

    model_config = {"frozen": True}

    @classmethod
    def build(cls, **values) -> "CSEParams":
        try:
            return cls(**values)
        except ValidationError as e:
            raise InvalidParamsError("invalid CSE parameters", {'errors': e.errors(include_url=False)})


def stiffness_matrix(l: int, k: float = 1.0, variant: str = "benchmark") -> np.ndarray:
    """
    Tridiagonal stiffness with -1 off the diagonal and 1 at both corners.
    The benchmark stencil has -2 on the inner diagonal, the standard chain +2.
    """
    inner = -2.0 if variant == "benchmark" else 2.0
    diag = np.full(l, inner)
    diag[0] = diag[-1] = 1.0
    Kc = np.diag(diag) - np.eye(l, k=1) - np.eye(l, k=-1)
    return k * Kc


def input_matrix(l: int) -> np.ndarray:
    """Force u_1 on the first mass, -u_2 on the last"""
    Dc = np.zeros((l, 2))
    Dc[0, 0] = 1.0
    Dc[-1, 1] = -1.0
    return Dc


def cse_continuous(params: CSEParams):
    """(A_c, B_c) of the continuous-time chain"""
    l = params.l
    Minv = np.eye(l) / params.mu
    Kc = stiffness_matrix(l, params.k, params.kc_variant)
    Lc = params.delta * np.eye(l)
    Ac = np.block([
        [np.zeros((l, l)), np.eye(l)],
        [-Minv @ Kc, -Minv @ Lc]
    ])
    Bc = np.vstack((np.zeros((l, 2)), Minv @ input_matrix(l)))
    return Ac, Bc


def cse_generate(params: CSEParams) -> LTISystem:
    """Forward Euler: A = I + Ts A_c, B = Ts B_c (n = 2l, m = 2)"""
    Ac, Bc = cse_continuous(params)
    return LTISystem(np.eye(2 * params.l) + params.Ts * Ac, params.Ts * Bc)
