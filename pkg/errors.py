"""
Errors Module
Exception hierarchy shared by the set backends, the MPI pipeline and the CLI
"""
from typing import Optional


class MPIError(Exception):
    """
    Base error. Each subclass carries the process exit code the CLI reports.
    """

    exit_code = 3

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> dict:
        return {
            'error': type(self).__name__,
            'message': self.message,
            'detail': self.detail,
            'exit_code': self.exit_code
        }


# Validation (exit code 2)

class InputValidationError(MPIError):
    """Malformed or inconsistent user input"""

    exit_code = 2


class DimensionMismatchError(InputValidationError):
    pass


class NonSquareError(InputValidationError):
    pass


class InvalidParamsError(InputValidationError):
    pass


class DimensionTooHighError(InputValidationError):
    pass


class UnboundedSetError(InputValidationError):
    """Constraint set unbounded, or the origin is not interior to it"""
    pass


# Computation (exit code 3)

class ComputationError(MPIError):
    """Numerical failure inside an algorithm"""

    exit_code = 3


class SingularMatrixError(ComputationError):
    pass


class NoConvergenceError(ComputationError):
    pass


class SwapIllConditionedError(ComputationError):
    pass


class NumericalStallError(ComputationError):
    pass


class EmptySetError(ComputationError):
    pass


class SingularDynamicsError(ComputationError):
    """Standard recurrence asked to invert a closed loop with zero eigenvalues"""
    pass


class NoZeroEigenvaluesError(ComputationError):
    """Schur split requested for a nonsingular matrix; use the standard branch"""
    pass


class UnstabilizableError(ComputationError):
    pass


# Iteration cap (exit code 4)

class IterationCapExceededError(MPIError):
    """Set recurrence did not reach a fixed point within k_max steps"""

    exit_code = 4
