"""Exception hierarchy shared by every module."""


class KwcError(Exception):
    """Base class for all library errors."""


class ValidationError(KwcError, ValueError):
    """Input violates a documented precondition or invariant."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain (e.g. a negative jump size)."""


class RangeError(ValidationError):
    """Argument outside a tabulated range."""


class CertificationError(KwcError):
    """A penalty constant could not be certified positive on the grid."""


class RefusalError(KwcError):
    """Work would exceed a configured resource bound."""
