"""Exception hierarchy.

Argument errors are plain ``ValueError``. Everything that the CLI maps to a
data/numeric failure (exit status 2) derives from :class:`LemdaError`.
"""


class LemdaError(Exception):
    """Base class for data, configuration and numeric failures."""


class SchemaError(LemdaError, ValueError):
    pass


class ParseError(LemdaError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class LabelError(LemdaError, ValueError):
    pass


class ConfigurationError(LemdaError, ValueError):
    pass


class TrainingError(LemdaError, RuntimeError):
    pass


class NumericError(LemdaError, ArithmeticError):
    pass
