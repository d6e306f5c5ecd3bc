"""
Errors Module

Exception hierarchy shared by every package in the project.
The command-line entry point maps UQCloudError to exit code 1.
"""


class UQCloudError(Exception):
    """Base class for all errors raised by this project."""


class DimensionError(UQCloudError, ValueError):
    """Raised when tensor or point-cloud shapes do not fit together."""


class NumericError(UQCloudError, ArithmeticError):
    """Raised when an operation receives non-finite input."""


class ContractError(UQCloudError, ValueError):
    """Raised when a precondition of an operation is violated."""


class ConsistencyError(UQCloudError):
    """Raised when an internal invariant does not hold."""


class CloudFormatError(UQCloudError, ValueError):
    """Raised when a cloud, checkpoint or stack file cannot be parsed."""


class CoverageError(UQCloudError):
    """Raised when an original point received no prediction."""


class IncompatibleMeasureError(ContractError):
    """Raised when an uncertainty measure cannot be computed for a regime or K."""


class TrainingDivergedError(UQCloudError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch}, step {step}: loss={loss}")
