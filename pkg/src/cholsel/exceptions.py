"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """Base class for numerical failures (as opposed to bad arguments)."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix or pivot that must be positive (definite) is not."""


class SingularBlockError(NumericalError):
    """A block that must be invertible is numerically singular."""


class ConvergenceError(NumericalError):
    """An iterative solver produced non-finite values or diverged."""
