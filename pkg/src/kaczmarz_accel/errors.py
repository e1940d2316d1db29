"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid user-supplied configuration (unknown kind, bad range, ...)."""


class SingularityError(ValueError):
    """Raised when an input matrix or block is (numerically) rank deficient."""


class CapabilityError(RuntimeError):
    """Raised when a request exceeds a built-in size guard.

    The message names the keyword argument that raises the guard, so callers
    can opt in to larger problems explicitly.
    """


class BreakdownError(ArithmeticError):
    """A near-zero denominator in a sequence transformation.

    Carries enough context for a driver to decide whether to skip the window
    (``condition`` for the linear-system path, ``cell`` for epsilon tables).
    """

    def __init__(self, message, condition=None, cell=None):
        super().__init__(message)
        self.condition = condition
        self.cell = cell
