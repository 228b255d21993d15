"""Exception types shared across the solver stack."""


class ViefError(Exception):
    pass


class ConfigError(ViefError):
    """Invalid problem/solver configuration (CLI exit code 2)."""


class ResourceError(ViefError):
    """A requested dense allocation exceeds the configured cap."""


class NumericalError(ViefError):
    """Numerical failure during factorization or solve (CLI exit code 3)."""


class SingularFactorError(NumericalError):
    """A per-box factor was singular at working precision.

    Carries enough context (box path, pivot magnitude) to locate the
    offending block.
    """

    def __init__(self, where, pivot):
        self.where = where
        self.pivot = pivot
        super().__init__(f"singular factor at {where} (pivot magnitude {pivot:.3e})")


class IterationError(NumericalError):
    """Iterative solve failed; carries the residual history."""

    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(message)
