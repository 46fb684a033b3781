"""Exception hierarchy shared by every module."""


class SomFsvmError(Exception):
    """Base class for all package errors."""


class ParameterError(SomFsvmError, ValueError):
    """An argument violates an operation's precondition."""


class DataError(SomFsvmError, ValueError):
    """Input data is invalid (bad values, too short, degenerate)."""


class FormatError(DataError):
    """Input text does not have the expected layout."""


class ContractError(SomFsvmError, ValueError):
    """An object is of the wrong kind for the requested operation."""


class TrainingError(SomFsvmError, RuntimeError):
    """Model training could not produce a usable model."""


class ConvergenceError(TrainingError):
    """The SVR solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, violation, beta=None):
        super().__init__(message)
        self.violation = violation
        self.beta = beta


class ModelFileError(SomFsvmError):
    """A persisted model could not be loaded."""


class ModelVersionError(ModelFileError):
    pass


class ModelCorruptError(ModelFileError):
    pass
