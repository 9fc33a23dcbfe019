"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value or failed to make progress."""


class DegeneratePathError(ValueError):
    """The observed path carries no information about a parameter."""


class IllConditionedError(NumericalError):
    """A sensitivity matrix is singular or too badly conditioned to invert."""
