"""Keypairs, certificate requests, certificates, chains and cross-certification.

Certificates use a canonical binary encoding rather than X.509: fields in a
fixed order, integers big-endian and fixed width, byte strings prefixed with
a 4-byte length.  The signature covers every field before it.

Armored form::

    -----BEGIN TRUFL CERTIFICATE-----
    <base64 of the canonical encoding, 64 columns>
    -----END TRUFL CERTIFICATE-----

Trust anchors use the label ``TRUFL TRUST ANCHOR``.
"""

from __future__ import annotations

import abc
import base64
import enum
import hashlib
import hmac
import itertools
import random
import struct
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

from trufl.errors import AuthorityError, CertificateFormatError, InvalidInputError

DEFAULT_VALIDITY = 60 * 60 * 24 * 365 * 5
SUPPORTED_STRENGTHS = (1024, 2048, 4096)


class CryptoProvider(abc.ABC):
    """Signature scheme backend.  Implementations must be thread-safe."""

    name: str

    @abc.abstractmethod
    def generate(self, strength: int) -> tuple[bytes, Any]:
        """Return (encoded public key, private handle)."""

    @abc.abstractmethod
    def sign(self, private: Any, data: bytes) -> bytes: ...

    @abc.abstractmethod
    def verify(self, public: bytes, data: bytes, signature: bytes) -> bool: ...


class RsaProvider(CryptoProvider):
    """RSA PKCS#1 v1.5 signatures over SHA-256."""

    name = "real"

    def generate(self, strength):
        private = rsa.generate_private_key(public_exponent=65537, key_size=strength)
        public = private.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )
        return public, private

    def sign(self, private, data):
        return private.sign(data, padding.PKCS1v15(), hashes.SHA256())

    def verify(self, public, data, signature):
        try:
            key = serialization.load_der_public_key(public)
            if not isinstance(key, rsa.RSAPublicKey):
                return False
            key.verify(signature, data, padding.PKCS1v15(), hashes.SHA256())
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True


class TestProvider(CryptoProvider):
    """Fast deterministic stand-in for RSA, for tests and large simulations.

    A private key is 32 seeded random bytes; the public key is a hash of it.
    Signatures are HMAC-SHA256 under the private key, and verification looks
    the private key up from the public one in this provider's registry, so
    only keys generated by the same provider instance verify.
    """

    __test__ = False  # not a pytest class
    name = "test"

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self._registry: dict[bytes, bytes] = {}

    def generate(self, strength):
        with self._lock:
            secret = self._rng.randbytes(32)
        public = hashlib.sha256(b"trufl-test-public" + strength.to_bytes(2, "big") + secret).digest()
        with self._lock:
            self._registry[public] = secret
        return public, secret

    def sign(self, private, data):
        return hmac.new(private, hashlib.sha256(data).digest(), hashlib.sha256).digest()

    def verify(self, public, data, signature):
        secret = self._registry.get(public)
        if secret is None:
            return False
        return hmac.compare_digest(self.sign(secret, data), signature)


_DEFAULT_PROVIDER = RsaProvider()
_PROVIDERS: dict[str, CryptoProvider] = {_DEFAULT_PROVIDER.name: _DEFAULT_PROVIDER}


def default_provider() -> CryptoProvider:
    return _DEFAULT_PROVIDER


def make_provider(name: str, seed: int = 0) -> CryptoProvider:
    if name == "real":
        return _DEFAULT_PROVIDER
    if name == "test":
        return TestProvider(seed)
    raise InvalidInputError(f"unknown crypto provider {name!r} (expected 'real' or 'test')")


@dataclass(frozen=True)
class PublicKey:
    algorithm: str
    strength: int
    data: bytes
    provider: CryptoProvider = field(compare=False, repr=False, hash=False)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.data).hexdigest()[:16]


class _SerialCounter:
    """Serial allocation for certificates issued under one key."""

    def __init__(self):
        self._next = itertools.count(1)
        self._lock = threading.Lock()

    def allocate(self) -> int:
        with self._lock:
            return next(self._next)


@dataclass(frozen=True)
class KeyPair:
    algorithm: str
    strength: int
    public: PublicKey
    private: Any = field(compare=False, repr=False)
    serials: _SerialCounter = field(default_factory=_SerialCounter, compare=False, repr=False)

    @property
    def provider(self) -> CryptoProvider:
        return self.public.provider


def generate_keypair(strength: int = 2048, provider: Optional[CryptoProvider] = None) -> KeyPair:
    if strength not in SUPPORTED_STRENGTHS:
        raise InvalidInputError(f"unsupported key strength {strength}; choose from {SUPPORTED_STRENGTHS}")
    provider = provider or _DEFAULT_PROVIDER
    public, private = provider.generate(strength)
    return KeyPair("RSA", strength, PublicKey("RSA", strength, public, provider), private)


def sign(data: bytes, key: KeyPair) -> bytes:
    return key.provider.sign(key.private, data)


def verify_signature(public_key: PublicKey, data: bytes, signature: bytes) -> bool:
    return public_key.provider.verify(public_key.data, data, signature)


@dataclass(frozen=True)
class CertRequest:
    subject_common_name: str
    subject_public_key: PublicKey


def create_cert_request(pair: KeyPair, cn: str) -> CertRequest:
    if not isinstance(cn, str) or not cn:
        raise InvalidInputError("certificate request needs a nonempty common name")
    return CertRequest(cn, pair.public)


_MAGIC = b"TRUFLCRT\x01"


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


@dataclass(frozen=True)
class Certificate:
    serial: int
    subject_common_name: str
    subject_public_key: PublicKey
    issuer_common_name: str
    not_before: int
    not_after: int
    signature: bytes = field(repr=False)

    def tbs_bytes(self) -> bytes:
        """Canonical encoding of every field the signature covers."""
        key = self.subject_public_key
        return b"".join(
            (
                _MAGIC,
                struct.pack(">Q", self.serial),
                _lp(self.subject_common_name.encode()),
                _lp(key.algorithm.encode()),
                struct.pack(">H", key.strength),
                _lp(key.data),
                _lp(self.issuer_common_name.encode()),
                struct.pack(">qq", self.not_before, self.not_after),
            )
        )

    def to_bytes(self) -> bytes:
        return self.tbs_bytes() + _lp(self.signature)

    @classmethod
    def from_bytes(cls, data: bytes, provider: Optional[CryptoProvider] = None) -> "Certificate":
        provider = provider or _DEFAULT_PROVIDER
        reader = _Reader(data)
        if reader.take(len(_MAGIC)) != _MAGIC:
            raise CertificateFormatError("bad certificate magic")
        (serial,) = struct.unpack(">Q", reader.take(8))
        subject = reader.text()
        algorithm = reader.text()
        (strength,) = struct.unpack(">H", reader.take(2))
        key_data = reader.blob()
        issuer = reader.text()
        not_before, not_after = struct.unpack(">qq", reader.take(16))
        signature = reader.blob()
        reader.finish()
        return cls(serial, subject, PublicKey(algorithm, strength, key_data, provider), issuer, not_before, not_after, signature)

    @property
    def is_self_signed(self) -> bool:
        return self.subject_common_name == self.issuer_common_name

    def valid_at(self, now: int) -> bool:
        return self.not_before <= now <= self.not_after

    def as_dict(self) -> dict:
        return {
            "serial": self.serial,
            "subject": self.subject_common_name,
            "issuer": self.issuer_common_name,
            "not_before": self.not_before,
            "not_after": self.not_after,
            "key": f"{self.subject_public_key.algorithm}-{self.subject_public_key.strength}",
            "fingerprint": self.subject_public_key.fingerprint(),
        }


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CertificateFormatError("truncated certificate")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def blob(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def text(self) -> str:
        try:
            return self.blob().decode()
        except UnicodeDecodeError:
            raise CertificateFormatError("certificate text field is not UTF-8") from None

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise CertificateFormatError("trailing bytes after certificate")


# A trust anchor is a self-signed certificate; a chain runs leaf first, anchor last.
TrustAnchor = Certificate
CertChain = tuple


def issue_certificate(
    req: CertRequest,
    issuer_cert: Certificate,
    issuer_key: KeyPair,
    validity_seconds: int = DEFAULT_VALIDITY,
    *,
    now: int,
) -> Certificate:
    """Sign ``req`` as ``issuer_cert``'s subject, valid from ``now`` for ``validity_seconds``."""
    if issuer_key.public != issuer_cert.subject_public_key:
        raise AuthorityError(f"key does not belong to issuer {issuer_cert.subject_common_name!r}")
    if validity_seconds <= 0:
        raise InvalidInputError("validity must be positive")
    return _signed(req, issuer_cert.subject_common_name, issuer_key, now, validity_seconds)


def _signed(req: CertRequest, issuer_cn: str, issuer_key: KeyPair, now: int, validity: int) -> Certificate:
    unsigned = Certificate(
        issuer_key.serials.allocate(),
        req.subject_common_name,
        req.subject_public_key,
        issuer_cn,
        now,
        now + validity,
        b"",
    )
    signature = sign(unsigned.tbs_bytes(), issuer_key)
    return Certificate(
        unsigned.serial,
        unsigned.subject_common_name,
        unsigned.subject_public_key,
        unsigned.issuer_common_name,
        unsigned.not_before,
        unsigned.not_after,
        signature,
    )


def self_sign(pair: KeyPair, cn: str, *, now: int, validity_seconds: int = DEFAULT_VALIDITY) -> TrustAnchor:
    return _signed(create_cert_request(pair, cn), cn, pair, now, validity_seconds)


def self_verifies(cert: Certificate) -> bool:
    return cert.is_self_signed and verify_signature(cert.subject_public_key, cert.tbs_bytes(), cert.signature)


@dataclass(frozen=True)
class Authority:
    """A CA: its certificate and the keypair that signs for it."""

    cert: Certificate
    key: KeyPair

    @property
    def name(self) -> str:
        return self.cert.subject_common_name

    def issue(self, req: CertRequest, validity_seconds: int = DEFAULT_VALIDITY, *, now: int) -> Certificate:
        return issue_certificate(req, self.cert, self.key, validity_seconds, now=now)


class FailureReason(enum.Enum):
    BAD_SIGNATURE = "BadSignature"
    EXPIRED = "Expired"
    NO_ANCHOR = "NoAnchor"
    BROKEN_LINKAGE = "BrokenLinkage"


@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    reason: Optional[FailureReason] = None
    position: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


def verify_chain(chain: Sequence[Certificate], anchors: Iterable[TrustAnchor], now: int) -> ChainVerdict:
    """Check linkage, signatures, validity windows and anchoring, in that order."""
    if not chain:
        raise InvalidInputError("cannot verify an empty chain")
    anchors = list(anchors)
    for i, (cert, parent) in enumerate(zip(chain, chain[1:])):
        if cert.issuer_common_name != parent.subject_common_name:
            return ChainVerdict(False, FailureReason.BROKEN_LINKAGE, i)
        if not verify_signature(parent.subject_public_key, cert.tbs_bytes(), cert.signature):
            return ChainVerdict(False, FailureReason.BAD_SIGNATURE, i)
    for i, cert in enumerate(chain):
        if not cert.valid_at(now):
            return ChainVerdict(False, FailureReason.EXPIRED, i)

    last = len(chain) - 1
    top = chain[-1]
    top_bytes = top.to_bytes()
    if any(a.to_bytes() == top_bytes for a in anchors):
        # the anchor itself closes the chain; it must still self-verify
        if self_verifies(top):
            return ChainVerdict(True)
        return ChainVerdict(False, FailureReason.BAD_SIGNATURE, last)
    issuers = [a for a in anchors if a.subject_common_name == top.issuer_common_name]
    if not issuers:
        if top.is_self_signed and not self_verifies(top):
            return ChainVerdict(False, FailureReason.BAD_SIGNATURE, last)
        return ChainVerdict(False, FailureReason.NO_ANCHOR, last)
    for anchor in issuers:
        if verify_signature(anchor.subject_public_key, top.tbs_bytes(), top.signature):
            if not anchor.valid_at(now):
                return ChainVerdict(False, FailureReason.EXPIRED, last + 1)
            return ChainVerdict(True)
    if top.is_self_signed:
        # same name as an anchor but a different key: an impostor root
        return ChainVerdict(False, FailureReason.NO_ANCHOR, last)
    return ChainVerdict(False, FailureReason.BAD_SIGNATURE, last)


def _check_anchor(auth: Authority, role: str) -> None:
    if not self_verifies(auth.cert):
        raise AuthorityError(f"{role} {auth.name!r} is not a valid self-signed anchor")
    if auth.key.public != auth.cert.subject_public_key:
        raise AuthorityError(f"{role} {auth.name!r} key does not match its certificate")


def cross_certify(
    root_a: Authority,
    root_b: Authority,
    bridge: Authority,
    *,
    now: int,
    validity_seconds: int = DEFAULT_VALIDITY,
) -> tuple[Certificate, Certificate]:
    """Have ``bridge`` certify both roots' keys; returns (cert for A, cert for B)."""
    for auth, role in ((root_a, "root A"), (root_b, "root B"), (bridge, "bridge")):
        _check_anchor(auth, role)
    cert_a = bridge.issue(CertRequest(root_a.name, root_a.cert.subject_public_key), validity_seconds, now=now)
    cert_b = bridge.issue(CertRequest(root_b.name, root_b.cert.subject_public_key), validity_seconds, now=now)
    return cert_a, cert_b


def bridge_chain(chain: Sequence[Certificate], cross_cert: Certificate) -> tuple[Certificate, ...]:
    """Re-anchor a chain through a bridge: drop a self-signed root matching the cross certificate's subject, append the cross certificate."""
    certs = list(chain)
    if certs and certs[-1].is_self_signed and certs[-1].subject_common_name == cross_cert.subject_common_name:
        certs.pop()
    if certs and certs[-1].issuer_common_name != cross_cert.subject_common_name:
        raise InvalidInputError(
            f"cross certificate for {cross_cert.subject_common_name!r} does not extend a chain issued by "
            f"{certs[-1].issuer_common_name!r}"
        )
    return tuple(certs) + (cross_cert,)


ARMOR_CERT = "TRUFL CERTIFICATE"
ARMOR_ANCHOR = "TRUFL TRUST ANCHOR"


def armor(cert: Certificate, label: str = ARMOR_CERT) -> str:
    body = base64.b64encode(cert.to_bytes()).decode()
    lines = [body[i : i + 64] for i in range(0, len(body), 64)]
    return f"-----BEGIN {label}-----\n" + "\n".join(lines) + f"\n-----END {label}-----\n"


def dearmor(text: str, provider: Optional[CryptoProvider] = None) -> list[tuple[str, Certificate]]:
    """Decode every armored block in ``text`` as (label, certificate)."""
    out = []
    label = None
    body: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("-----BEGIN ") and line.endswith("-----"):
            if label is not None:
                raise CertificateFormatError(f"line {lineno}: nested BEGIN marker")
            label, body = line[11:-5], []
        elif line.startswith("-----END ") and line.endswith("-----"):
            if label is None or line[9:-5] != label:
                raise CertificateFormatError(f"line {lineno}: END marker without matching BEGIN")
            try:
                der = base64.b64decode("".join(body), validate=True)
            except ValueError:
                raise CertificateFormatError(f"line {lineno}: invalid base64 body") from None
            out.append((label, Certificate.from_bytes(der, provider)))
            label = None
        elif label is not None:
            body.append(line)
        elif line:
            raise CertificateFormatError(f"line {lineno}: text outside an armored block")
    if label is not None:
        raise CertificateFormatError("unterminated armored block")
    return out
