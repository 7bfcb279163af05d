"""Exception hierarchy shared by every module."""


class ErgobandsError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ValidationError(ErgobandsError, ValueError):
    exit_code = 2


class CertificationError(ErgobandsError):
    """A root or band edge could not be certified at the working precision."""

    exit_code = 3


class PrecisionError(CertificationError):
    """Cancellation consumed every significant bit of the working precision."""


class NearSingularError(ErgobandsError):
    """Dirichlet determinant below the configured floor."""

    exit_code = 3

    def __init__(self, message, magnitude):
        super().__init__(message)
        self.magnitude = magnitude
