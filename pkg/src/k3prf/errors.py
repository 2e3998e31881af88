class K3prfError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(K3prfError, ValueError):
    pass


class IllConditionedError(K3prfError, ArithmeticError):
    """A matrix that must be inverted is singular beyond the ridge tolerance."""

    def __init__(self, message, matrix=None, step=None):
        super().__init__(message)
        self.matrix = matrix
        self.step = step


class ConfigError(K3prfError, ValueError):
    pass


class DataError(K3prfError, ValueError):
    pass
