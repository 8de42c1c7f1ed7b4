"""Exception types shared across the package."""


class ErgmPoolError(Exception):
    """Base class for all package errors."""


class ParseError(ErgmPoolError):
    """A malformed row in an input file; message names the file and line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ValidationError(ErgmPoolError):
    """Input violates a structural invariant (self-loop, duplicate tie, unknown node)."""


class DegenerateNetworkError(ErgmPoolError):
    """Network too small for the requested computation (n < 2)."""


class MissingCovariateError(ErgmPoolError):
    """A model term references an attribute with missing values."""


class UnsupportedTermError(ErgmPoolError):
    """Term cannot be handled by the dyad-factorized code path."""


class NonIdentifiedModelError(ErgmPoolError):
    """Information matrix singular even after the ridge fallback."""


class SizeLimitError(ErgmPoolError):
    """Brute-force enumeration requested on a network above the size cap."""


class UnimputableColumnError(ErgmPoolError):
    """A column has no observed values to regress on."""


class EmptyPoolError(ErgmPoolError):
    """Every fit was excluded by the filters; nothing to pool."""


class InvalidObservationError(ErgmPoolError):
    """An effect observation has a non-positive or non-finite standard error."""
