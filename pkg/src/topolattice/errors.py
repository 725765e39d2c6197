class ValidationError(ValueError):
    """Bad input: violated invariant, malformed config, unsupported option."""


class NumericalError(RuntimeError):
    """A computation could not deliver its accuracy contract."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TransitionError(NumericalError):
    """The requested invariant is undefined because a gap is closed."""


class InterfaceWarning(UserWarning):
    """Interface lattice does not host the expected number of midgap modes."""
