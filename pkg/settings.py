"""
Settings Module
Numerical options for the MPI pipeline, overridable from the environment
"""
import os
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from errors import InvalidParamsError

# Load environment variables
load_dotenv()


ENV_PREFIX = "MPI_"


class MPIOptions(BaseModel):
    """
    Tolerances and limits shared by every algorithm. Defaults follow the
    documented values; the CLI and problem files override them field by field.
    """
    eps_zero: float = Field(1e-9, gt=0, description="Relative threshold for a zero eigenvalue")
    tol_nil: float = Field(1e-9, gt=0, description="Relative nilpotency tolerance for S22")
    tol_feas: float = Field(1e-8, gt=0, description="Absolute LP feasibility tolerance")
    k_max: int = Field(500, ge=1, description="Iteration cap of every set recurrence")
    p_offset: int = Field(0, ge=0, description="Extra lift steps beyond the minimal horizon")
    sign: int = Field(1, description="Closed loop A + sign * B K")
    lp_backend: Literal["simplex", "highs"] = Field("simplex", description="LP solver used for set queries")

    model_config = {"frozen": True}

    @field_validator("sign")
    @classmethod
    def _check_sign(cls, value: int) -> int:
        if value not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return value

    @classmethod
    def from_env(cls, **overrides) -> "MPIOptions":
        """
        Build options from MPI_* environment variables, then apply overrides

        Args:
            **overrides: Field values taking precedence over the environment

        Returns:
            Validated options
        """
        values = {}
        for name in cls.model_fields:
            raw = os.getenv(ENV_PREFIX + name.upper())
            if raw is not None and raw != "":
                values[name] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        return build_options(values)

    def merged(self, **overrides) -> "MPIOptions":
        """Return a copy with the non-None overrides applied"""
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return build_options(values)


def build_options(values: Optional[dict] = None) -> MPIOptions:
    """Validate a plain dict into options, mapping failures to InvalidParamsError"""
    try:
        return MPIOptions(**(values or {}))
    except ValidationError as e:
        raise InvalidParamsError(f"Invalid options: {e.errors()[0]['msg']}", {'errors': str(e)})


def log_level() -> str:
    return os.getenv("MPI_LOG_LEVEL", "WARNING").upper()
