"""Hierarchical trust provisioning and link-wise verification over a topology.

The management-plane root certifies every controller; each controller acts
as its domain's control-plane CA and certifies the domain's switches; each
switch acts as a data-plane CA for the hosts cabled to it.  Every host chain
is therefore (host, switch, controller, root).

Distributed mode runs one worker per security domain and, inside a domain,
a pool over switches and then over host ports.  Controller certificates are
issued by the root before the domain workers start.
"""

from __future__ import annotations

import enum
import os
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from trufl.errors import InvalidInputError
from trufl.pki import (
    DEFAULT_VALIDITY,
    Authority,
    Certificate,
    CryptoProvider,
    FailureReason,
    KeyPair,
    create_cert_request,
    default_provider,
    generate_keypair,
    self_sign,
    sign,
    verify_chain,
    verify_signature,
)
from trufl.topology import Link, NetworkTopology, NodeKind, ROOT_ID, validate, with_domain_member

NONCE_BYTES = 32


class ModeKind(enum.Enum):
    NO_TRUST = "none"
    CENTRALIZED = "central"
    DISTRIBUTED = "dist"


@dataclass(frozen=True)
class TrustMode:
    kind: ModeKind
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidInputError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def no_trust(cls) -> "TrustMode":
        return cls(ModeKind.NO_TRUST)

    @classmethod
    def centralized(cls) -> "TrustMode":
        return cls(ModeKind.CENTRALIZED)

    @classmethod
    def distributed(cls, workers: Optional[int] = None) -> "TrustMode":
        return cls(ModeKind.DISTRIBUTED, workers or max(os.cpu_count() or 1, 2))

    @classmethod
    def parse(cls, name: str, workers: Optional[int] = None) -> "TrustMode":
        try:
            kind = ModeKind(name)
        except ValueError:
            raise InvalidInputError(f"unknown trust mode {name!r} (expected none, central or dist)") from None
        if kind is ModeKind.DISTRIBUTED:
            return cls.distributed(workers)
        return cls(kind)

    def __str__(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class Credential:
    key: KeyPair
    cert: Certificate
    chain: tuple[Certificate, ...]


@dataclass
class TrustStore:
    credentials: dict[str, Credential] = field(default_factory=dict)
    anchors: tuple[Certificate, ...] = ()
    root: Optional[Authority] = None
    provider: CryptoProvider = field(default_factory=default_provider)
    key_bits: int = 2048

    def __len__(self) -> int:
        return len(self.credentials)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.credentials

    def get(self, node_id: str) -> Optional[Credential]:
        return self.credentials.get(node_id)

    def certificates(self) -> list[Certificate]:
        certs = [c.cert for c in self.credentials.values()]
        if self.root is not None:
            certs.insert(0, self.root.cert)
        return certs

    def edges(self) -> set[tuple[str, str]]:
        """(subject, issuer) pairs of every issued certificate."""
        return {(c.subject_common_name, c.issuer_common_name) for c in self.certificates()}


@dataclass
class SetupReport:
    mode: str
    host_count: int
    wall_clock_setup: float
    wall_clock_verify: Optional[float] = None
    per_domain: dict[str, float] = field(default_factory=dict)
    certificates: int = 0

    @property
    def total(self) -> float:
        return self.wall_clock_setup + (self.wall_clock_verify or 0.0)

    def as_dict(self) -> dict:
        return {
            "event": "setup",
            "mode": self.mode,
            "host_count": self.host_count,
            "certificates": self.certificates,
            "wall_clock_setup_ms": round(self.wall_clock_setup, 2),
            "wall_clock_verify_ms": None if self.wall_clock_verify is None else round(self.wall_clock_verify, 2),
            "per_domain_ms": {k: round(v, 2) for k, v in self.per_domain.items()},
        }


def _ms_since(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def setup_root_ca(
    name: str = ROOT_ID,
    *,
    provider: Optional[CryptoProvider] = None,
    key_bits: int = 2048,
    now: int = 0,
    validity_seconds: int = DEFAULT_VALIDITY,
) -> Authority:
    if not name:
        raise InvalidInputError("root CA needs a nonempty name")
    key = generate_keypair(key_bits, provider)
    return Authority(self_sign(key, name, now=now, validity_seconds=validity_seconds), key)


class _Issuer:
    def __init__(self, provider, key_bits, now, validity):
        self.provider, self.key_bits, self.now, self.validity = provider, key_bits, now, validity

    def __call__(self, parent: Authority, parent_chain: tuple[Certificate, ...], node_id: str) -> Credential:
        key = generate_keypair(self.key_bits, self.provider)
        cert = parent.issue(create_cert_request(key, node_id), self.validity, now=self.now)
        return Credential(key, cert, (cert,) + parent_chain)


def _as_authority(cred: Credential) -> Authority:
    return Authority(cred.cert, cred.key)


def provision(
    topology: NetworkTopology,
    mode: TrustMode,
    *,
    provider: Optional[CryptoProvider] = None,
    key_bits: int = 2048,
    now: int = 0,
    validity_seconds: int = DEFAULT_VALIDITY,
) -> tuple[TrustStore, SetupReport]:
    """Issue keys and certificates for every controller, switch and host."""
    errors = validate(topology)
    if errors:
        raise InvalidInputError("invalid topology: " + "; ".join(map(str, errors[:5])))
    provider = provider or default_provider()
    n_hosts = len(topology.hosts)
    t0 = time.perf_counter()
    if mode.kind is ModeKind.NO_TRUST:
        store = TrustStore(provider=provider, key_bits=key_bits)
        return store, SetupReport(str(mode), n_hosts, _ms_since(t0))

    roots = topology.ids(NodeKind.ROOT)
    root = setup_root_ca(roots[0], provider=provider, key_bits=key_bits, now=now, validity_seconds=validity_seconds)
    issue = _Issuer(provider, key_bits, now, validity_seconds)
    root_chain = (root.cert,)
    creds: dict[str, Credential] = {}
    for dom in topology.domains.values():
        if dom.controller not in creds:
            creds[dom.controller] = issue(root, root_chain, dom.controller)

    hosts_of = {s: [] for s in topology.switches}
    for h in topology.hosts:
        att = topology.attachment(h)
        if att is None:
            raise InvalidInputError(f"host {h} is not attached to a switch")
        hosts_of[att[0]].append(h)

    per_domain: dict[str, float] = {}
    if mode.kind is ModeKind.CENTRALIZED:
        for dom in topology.domains.values():
            td = time.perf_counter()
            ctl = creds[dom.controller]
            for s in dom.switches:
                creds[s] = issue(_as_authority(ctl), ctl.chain, s)
                sw = creds[s]
                for h in hosts_of[s]:
                    creds[h] = issue(_as_authority(sw), sw.chain, h)
            per_domain[dom.id] = _ms_since(td)
    else:
        workers = mode.workers

        def run_domain(dom):
            td = time.perf_counter()
            ctl = creds[dom.controller]
            ctl_auth = _as_authority(ctl)
            out: dict[str, Credential] = {}
            with ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"CA-{dom.id}") as pool:
                for s, cred in zip(dom.switches, pool.map(lambda s: issue(ctl_auth, ctl.chain, s), dom.switches)):
                    out[s] = cred
                jobs = [(s, h) for s in dom.switches for h in hosts_of[s]]
                results = pool.map(lambda job: issue(_as_authority(out[job[0]]), out[job[0]].chain, job[1]), jobs)
                for (_, h), cred in zip(jobs, results):
                    out[h] = cred
            return dom.id, out, _ms_since(td)

        domains = list(topology.domains.values())
        with ThreadPoolExecutor(max_workers=min(workers, len(domains)) or 1, thread_name_prefix="CA-dom") as pool:
            for dom_id, out, ms in pool.map(run_domain, domains):
                creds.update(out)
                per_domain[dom_id] = ms

    ordered = {n: creds[n] for n in topology.nodes if n in creds}
    store = TrustStore(ordered, (root.cert,), root, provider, key_bits)
    report = SetupReport(str(mode), n_hosts, _ms_since(t0), per_domain=per_domain, certificates=len(store.certificates()))
    return store, report


@dataclass(frozen=True)
class EndpointCheck:
    node: str
    ok: bool
    reason: Optional[FailureReason] = None


@dataclass(frozen=True)
class LinkCheck:
    link: Link
    a: EndpointCheck
    b: EndpointCheck

    @property
    def ok(self) -> bool:
        return self.a.ok and self.b.ok

    @property
    def reason(self) -> Optional[FailureReason]:
        return self.a.reason or self.b.reason

    def as_dict(self) -> dict:
        return {
            "link": [f"{self.link.a[0]}:{self.link.a[1]}", f"{self.link.b[0]}:{self.link.b[1]}"],
            "ok": self.ok,
            "reason": None if self.reason is None else self.reason.value,
            "failed_nodes": [e.node for e in (self.a, self.b) if not e.ok],
        }


@dataclass
class VerifyReport:
    mode: str
    links: list[LinkCheck]
    wall_clock_verify: float

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.links)

    def failures(self) -> list[LinkCheck]:
        return [c for c in self.links if not c.ok]

    def failed_nodes(self) -> set[str]:
        return {e.node for c in self.links for e in (c.a, c.b) if not e.ok}

    def as_dict(self) -> dict:
        return {
            "event": "verify",
            "mode": self.mode,
            "links": len(self.links),
            "passed": sum(c.ok for c in self.links),
            "failed": len(self.failures()),
            "wall_clock_verify_ms": round(self.wall_clock_verify, 2),
        }


def check_endpoint(store: TrustStore, node_id: str, nonce: bytes, now: int) -> EndpointCheck:
    """Challenge-response on the node's key, then its chain to the store's anchors."""
    cred = store.get(node_id)
    if cred is None:
        return EndpointCheck(node_id, False, FailureReason.NO_ANCHOR)
    challenge = nonce + node_id.encode()
    presented = cred.chain[0]
    if not verify_signature(presented.subject_public_key, challenge, sign(challenge, cred.key)):
        return EndpointCheck(node_id, False, FailureReason.BAD_SIGNATURE)
    verdict = verify_chain(cred.chain, store.anchors, now)
    return EndpointCheck(node_id, verdict.ok, verdict.reason)


def verify_trust(
    topology: NetworkTopology,
    store: TrustStore,
    mode: TrustMode,
    *,
    now: int = 0,
    nonce: Optional[bytes] = None,
) -> VerifyReport:
    """Probe both ends of every link; failures are report entries, never exceptions."""
    nonce = os.urandom(NONCE_BYTES) if nonce is None else nonce
    t0 = time.perf_counter()
    links = list(topology.links)

    if mode.kind is ModeKind.NO_TRUST:
        # liveness walk only: both ends must exist, nothing is signed
        nodes = topology.nodes
        results = [
            LinkCheck(l, EndpointCheck(l.a[0], l.a[0] in nodes), EndpointCheck(l.b[0], l.b[0] in nodes))
            for l in links
        ]
        return VerifyReport(str(mode), results, _ms_since(t0))

    def check(link: Link) -> LinkCheck:
        a, b = link.owners()
        return LinkCheck(link, check_endpoint(store, a, nonce, now), check_endpoint(store, b, nonce, now))

    if mode.kind is ModeKind.CENTRALIZED:
        results = [check(l) for l in links]
    else:
        groups: dict[Optional[str], list[int]] = {}
        for i, link in enumerate(links):
            a, b = link.owners()
            groups.setdefault(topology.domain_of(a) or topology.domain_of(b), []).append(i)
        results: list[Optional[LinkCheck]] = [None] * len(links)
        workers = mode.workers

        def run_group(idx: list[int]):
            with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="verify") as inner:
                return idx, list(inner.map(lambda i: check(links[i]), idx))

        with ThreadPoolExecutor(max_workers=min(workers, len(groups)) or 1, thread_name_prefix="verify-dom") as pool:
            for idx, checks in pool.map(run_group, groups.values()):
                for i, c in zip(idx, checks):
                    results[i] = c
    return VerifyReport(str(mode), results, _ms_since(t0))


def run_trust(
    topology: NetworkTopology,
    mode: TrustMode,
    **kw,
) -> tuple[TrustStore, SetupReport, VerifyReport]:
    """provision then verify_trust; the setup report carries both timings."""
    now = kw.get("now", 0)
    store, report = provision(topology, mode, **kw)
    vr = verify_trust(topology, store, mode, now=now)
    report.wall_clock_verify = vr.wall_clock_verify
    return store, report, vr


def median_ms(samples: Sequence[float]) -> float:
    if not samples:
        raise InvalidInputError("no timing samples")
    return statistics.median(samples)


def attach_rogue_switch(
    topology: NetworkTopology,
    store: TrustStore,
    *,
    rng: Optional[random.Random] = None,
    attach_to: Optional[str] = None,
    now: int = 0,
) -> str:
    """Cable a switch holding only a self-signed certificate into the data plane."""
    rng = rng or random.Random(0)
    legit = topology.switches
    if not legit:
        raise InvalidInputError("topology has no switch to attach a rogue to")
    target = attach_to or rng.choice(legit)
    n = 1
    while f"rogue{n}" in topology.nodes:
        n += 1
    rogue = f"rogue{n}"
    topology.add_node(rogue, NodeKind.SWITCH)
    rp = topology.add_port(rogue, (0x0266 << 32) | (n << 16) | 1)
    tp = topology.add_port(target, (0x0265 << 32) | (n << 16) | topology.next_port_index(target))
    topology.add_link(tp.key, rp.key)
    dom = topology.domain_of(target)
    if dom is not None:
        with_domain_member(topology, dom, switch=rogue)
    key = generate_keypair(store.key_bits, store.provider)
    cert = self_sign(key, rogue, now=now)
    store.credentials[rogue] = Credential(key, cert, (cert,))
    return rogue


def replace_certificate(store: TrustStore, old: Certificate, new: Certificate) -> int:
    """Swap ``old`` for ``new`` wherever it appears in the store's chains; returns credentials touched."""
    touched = 0
    for node, cred in list(store.credentials.items()):
        if any(c is old or c == old for c in cred.chain):
            chain = tuple(new if (c is old or c == old) else c for c in cred.chain)
            store.credentials[node] = replace(cred, cert=chain[0], chain=chain)
            touched += 1
    return touched
