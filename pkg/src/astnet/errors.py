"""Exception types shared across the package."""


class AstnetError(Exception):
    """Base class for all package-specific errors."""


class InputError(AstnetError, ValueError):
    """An input violated a documented precondition and was rejected."""


class NumericalError(AstnetError, RuntimeError):
    """A computation produced a non-finite or otherwise unusable value."""


class GradientCheckError(NumericalError):
    """The objective became non-finite while probing a parameter."""

    def __init__(self, param_name, message):
        self.param_name = param_name
        super().__init__(message)


class DataError(AstnetError, RuntimeError):
    """Required data (corpus entries, checkpoints, pairs) is missing or malformed."""
