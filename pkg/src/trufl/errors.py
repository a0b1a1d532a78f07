class TruflError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(TruflError, ValueError):
    """Rejected input: bad sizes, malformed records, unsupported parameters."""


class AuthorityError(TruflError):
    """A CA operation was attempted with mismatched or invalid authority material."""


class CertificateFormatError(TruflError, ValueError):
    """Encoded certificate bytes or armor could not be decoded."""
