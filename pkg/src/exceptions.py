"""
Exception hierarchy shared by every OrdiStage module.

Each family carries the process exit code the CLI reports for it.
"""


class OrdiStageError(Exception):
    """Base class for all domain errors"""

    exit_code = 1


class ConfigError(OrdiStageError):
    """Invalid or inconsistent configuration"""

    exit_code = 2


class ParameterError(ConfigError, ValueError):
    """A numeric or structural parameter is outside its allowed range"""


class DataError(OrdiStageError):
    """Missing, malformed or unusable data"""

    exit_code = 3


class InputError(DataError, ValueError):
    """An input value violates an operation's precondition"""


class StratificationError(DataError):
    """A stage x sex cell is too small to be stratified"""


class CheckpointError(DataError):
    """A checkpoint file could not be parsed"""


class MissingCheckpointError(CheckpointError):
    """A fold's checkpoint is absent from a run directory"""

    def __init__(self, fold: int, path: str):
        super().__init__(f"Missing checkpoint for fold {fold}: {path}")
        self.fold = fold
        self.path = path

    def __reduce__(self):
        return (type(self), (self.fold, self.path))


class NumericError(OrdiStageError):
    """A numerical failure (non-finite values, undefined quantities)"""

    exit_code = 4


class DimensionError(NumericError, ValueError):
    """Operand shapes are incompatible"""


class ContractError(NumericError):
    """An operation was called outside its contract"""


class UndefinedKappaError(NumericError):
    """Chance agreement equals 1, so weighted kappa is undefined"""


class ConvergenceError(NumericError):
    """An iterative solver did not converge"""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.message = message
        self.residual = residual

    def __reduce__(self):
        return (type(self), (self.message, self.residual))


class FoldError(OrdiStageError):
    """Wraps an error raised while processing one cross-validation fold"""

    def __init__(self, fold: int, cause: Exception):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)

    def __reduce__(self):
        return (type(self), (self.fold, self.cause))
