"""Exception hierarchy shared across the package.

User-facing tools map ``ConfigError`` to exit code 2 and
``NumericalError`` to exit code 3; everything else is a bug.
"""


class StickSlipError(Exception):
    """Base class for all package errors."""


class ConfigError(StickSlipError):
    """Invalid user input: bad shapes, unknown options, malformed files."""


class ShapeError(ConfigError):
    """An array did not have the expected shape or dtype."""


class InsufficientDataError(ConfigError):
    """Too few samples to perform the requested operation."""


class FieldStraddleError(ConfigError):
    """A field contributes wells to both the training and the test side."""


class NumericalError(StickSlipError):
    """A computation produced non-finite values or diverged."""


class SimulationDiverged(NumericalError):
    """The drill-string integrator left the stable regime."""

    def __init__(self, step: int, time_s: float, message: str = ""):
        self.step = step
        self.time_s = time_s
        detail = message or f"integration diverged at step {step} (t={time_s:.3f} s)"
        super().__init__(detail)


class TrainingDiverged(NumericalError):
    """A training loss became NaN or infinite."""

    def __init__(self, epoch: int, step: int, message: str = ""):
        self.epoch = epoch
        self.step = step
        detail = message or f"non-finite loss at epoch {epoch}, step {step}"
        super().__init__(detail)
