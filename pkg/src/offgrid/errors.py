"""Exception types shared across modules. CLI exit codes key off these."""


class OffgridError(Exception):
    """Base class for library errors."""


class InvalidArgument(OffgridError, ValueError):
    pass


class PreconditionError(OffgridError, ValueError):
    pass


class ConfigurationError(OffgridError, ValueError):
    pass


class UnsupportedError(OffgridError, NotImplementedError):
    pass


class IllPosedError(OffgridError, ArithmeticError):
    """Linear system too ill-conditioned to trust (condition number above threshold)."""


class EmbeddingViolation(OffgridError, ArithmeticError):
    """Pivot spectral support is not contained in the model spectral support."""

    def __init__(self, message, frequency=None):
        super().__init__(message)
        self.frequency = frequency


class DiagnosticError(OffgridError, RuntimeError):
    pass
