"""Exception types raised across the package."""


class LinMedError(Exception):
    """Base class for all package errors."""


class InvalidArgument(LinMedError, ValueError):
    pass


class DesignError(LinMedError, RuntimeError):
    """The design routine hit its termination cap.

    The partial report is attached as ``report`` for diagnosis.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EstimatorUndefined(LinMedError, ArithmeticError):
    """An importance weight could not be formed (propensity <= 0)."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class Unsupported(LinMedError, NotImplementedError):
    pass


class ConfigError(LinMedError, ValueError):
    pass


class ParseError(LinMedError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SchemaError(LinMedError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
