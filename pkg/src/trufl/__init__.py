"""Distributed trust management and flow-rule verification for simulated SDN networks."""

from trufl.errors import AuthorityError, CertificateFormatError, InvalidInputError, TruflError

__version__ = "0.1.0"

__all__ = [
    "AuthorityError",
    "CertificateFormatError",
    "InvalidInputError",
    "TruflError",
    "__version__",
]
