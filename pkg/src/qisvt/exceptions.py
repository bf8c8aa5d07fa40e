"""Exception types raised across the package."""


class QisvtError(Exception):
    """Base class for all package errors."""


class ZeroNormError(QisvtError, ValueError):
    """Sampling was requested from an all-zero distribution."""


class RejectionBudgetExceeded(QisvtError, RuntimeError):
    """Rejection sampling gave up before accepting a sample."""


class VanishingCombinationError(QisvtError, ValueError):
    """A linear combination has zero norm, so its oversampling factor is infinite."""


class ParityError(QisvtError, ValueError):
    """Polynomial parity does not match what the routine requires."""


class CertificationError(QisvtError, RuntimeError):
    """A constructed polynomial failed its grid certification."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class ConvergenceError(QisvtError, RuntimeError):
    """An iterative dense routine hit its iteration cap."""


class ParseError(QisvtError, ValueError):
    """Malformed input file."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
