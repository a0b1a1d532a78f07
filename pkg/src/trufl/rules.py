"""Flow-rule data model: header patterns, actions, rules, packets, SLA intents.

Rule text grammar (one rule per line, whitespace separated)::

    priority proto in_port src_mac dst_mac src_ip dst_ip src_port dst_port vlan action [args] origin

``*`` is the wildcard in every position.  Actions are ``drop``, ``allow``,
``fwd <port>`` and ``tunnel <vlan> <mac-pattern>``; origin is ``controller``
or ``local``.  A MAC pattern with fewer than six fields must start with ``*``
and is left-padded with wildcards, so ``*:00:0a:01`` means ``*:*:*:00:0a:01``.
"""

from __future__ import annotations

import enum
import ipaddress
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from trufl.errors import InvalidInputError

MAC_BITS = 48
MAC_FULL = (1 << MAC_BITS) - 1
PORT_MAX = 65535


class Protocol(enum.Enum):
    TCP = "tcp"
    UDP = "udp"
    ANY = "any"


class Verdict(enum.Enum):
    ALLOW = "allow"
    DROP = "drop"


class Origin(enum.Enum):
    CONTROLLER = "controller"
    LOCAL = "local"


class ActionKind(enum.Enum):
    DROP = "drop"
    ALLOW = "allow"
    FORWARD = "fwd"
    TUNNEL = "tunnel"


def mac_to_int(text: str) -> int:
    parts = text.split(":")
    if len(parts) != 6:
        raise InvalidInputError(f"bad MAC address {text!r}")
    try:
        octets = [int(p, 16) for p in parts]
    except ValueError:
        raise InvalidInputError(f"bad MAC address {text!r}") from None
    if any(len(p) != 2 or not 0 <= o <= 255 for p, o in zip(parts, octets)):
        raise InvalidInputError(f"bad MAC address {text!r}")
    value = 0
    for o in octets:
        value = (value << 8) | o
    return value


def int_to_mac(value: int) -> str:
    return ":".join(f"{(value >> s) & 0xFF:02x}" for s in range(40, -8, -8))


def ip_to_int(text: str) -> int:
    try:
        return int(ipaddress.IPv4Address(text))
    except ValueError:
        raise InvalidInputError(f"bad IPv4 address {text!r}") from None


def int_to_ip(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


@dataclass(frozen=True)
class MacPattern:
    """Per-byte exact-or-wildcard match over a 48-bit hardware address."""

    value: int = 0
    mask: int = 0

    @classmethod
    def parse(cls, text: str) -> "MacPattern":
        if text == "*":
            return cls()
        fields = text.lower().split(":")
        if len(fields) > 6 or (len(fields) < 6 and fields[0] != "*"):
            raise InvalidInputError(f"bad MAC pattern {text!r}")
        fields = ["*"] * (6 - len(fields)) + fields
        value = mask = 0
        for f in fields:
            value <<= 8
            mask <<= 8
            if f == "*":
                continue
            if len(f) != 2:
                raise InvalidInputError(f"bad MAC pattern {text!r}")
            try:
                value |= int(f, 16)
            except ValueError:
                raise InvalidInputError(f"bad MAC pattern {text!r}") from None
            mask |= 0xFF
        return cls(value, mask)

    @classmethod
    def exact(cls, mac: int) -> "MacPattern":
        return cls(mac & MAC_FULL, MAC_FULL)

    @property
    def is_wildcard(self) -> bool:
        return self.mask == 0

    def matches(self, mac: int) -> bool:
        return (mac & self.mask) == self.value

    def __str__(self) -> str:
        if self.mask == 0:
            return "*"
        out = []
        for s in range(40, -8, -8):
            out.append(f"{(self.value >> s) & 0xFF:02x}" if (self.mask >> s) & 0xFF else "*")
        return ":".join(out)


@dataclass(frozen=True)
class IpPattern:
    """CIDR match; prefix length 0 is the wildcard."""

    network: int = 0
    prefixlen: int = 0

    def __post_init__(self):
        if not 0 <= self.prefixlen <= 32:
            raise InvalidInputError(f"prefix length {self.prefixlen} outside [0, 32]")

    @classmethod
    def parse(cls, text: str) -> "IpPattern":
        if text == "*":
            return cls()
        try:
            net = ipaddress.IPv4Network(text, strict=False)
        except ValueError:
            raise InvalidInputError(f"bad IPv4 pattern {text!r}") from None
        return cls(int(net.network_address), net.prefixlen)

    @property
    def mask(self) -> int:
        return (0xFFFFFFFF << (32 - self.prefixlen)) & 0xFFFFFFFF

    def matches(self, ip: int) -> bool:
        return (ip & self.mask) == self.network

    def as_network(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network((self.network, self.prefixlen))

    def __str__(self) -> str:
        if self.prefixlen == 0:
            return "*"
        return str(self.as_network())


@dataclass(frozen=True)
class PortRange:
    lo: int = 0
    hi: int = PORT_MAX

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi <= PORT_MAX):
            raise InvalidInputError(f"port range {self.lo}-{self.hi} outside [0, {PORT_MAX}]")

    @classmethod
    def parse(cls, text: str) -> "PortRange":
        if text == "*":
            return cls()
        try:
            if "-" in text:
                lo, hi = text.split("-", 1)
                return cls(int(lo), int(hi))
            return cls(int(text), int(text))
        except ValueError:
            raise InvalidInputError(f"bad port pattern {text!r}") from None

    def matches(self, port: int) -> bool:
        return self.lo <= port <= self.hi

    def __str__(self) -> str:
        if (self.lo, self.hi) == (0, PORT_MAX):
            return "*"
        if self.lo == self.hi:
            return str(self.lo)
        return f"{self.lo}-{self.hi}"


def _parse_optional_int(text: str, what: str, lo: int, hi: int) -> Optional[int]:
    if text == "*":
        return None
    try:
        value = int(text)
    except ValueError:
        raise InvalidInputError(f"bad {what} {text!r}") from None
    if not lo <= value <= hi:
        raise InvalidInputError(f"{what} {value} outside [{lo}, {hi}]")
    return value


@dataclass(frozen=True)
class HeaderPattern:
    in_port: Optional[int] = None
    src_mac: MacPattern = MacPattern()
    dst_mac: MacPattern = MacPattern()
    src_ip: IpPattern = IpPattern()
    dst_ip: IpPattern = IpPattern()
    src_port: PortRange = PortRange()
    dst_port: PortRange = PortRange()
    vlan: Optional[int] = None

    def matches(self, pkt: "Packet") -> bool:
        return (
            (self.in_port is None or self.in_port == pkt.in_port)
            and self.src_mac.matches(pkt.src_mac)
            and self.dst_mac.matches(pkt.dst_mac)
            and self.src_ip.matches(pkt.src_ip)
            and self.dst_ip.matches(pkt.dst_ip)
            and self.src_port.matches(pkt.src_port)
            and self.dst_port.matches(pkt.dst_port)
            and (self.vlan is None or self.vlan == pkt.vlan)
        )


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    out_port: Optional[int] = None
    tunnel_vlan: Optional[int] = None
    tunnel_mac: Optional[MacPattern] = None

    @classmethod
    def drop(cls) -> "Action":
        return cls(ActionKind.DROP)

    @classmethod
    def allow(cls) -> "Action":
        return cls(ActionKind.ALLOW)

    @classmethod
    def forward(cls, port: int) -> "Action":
        if port < 1:
            raise InvalidInputError(f"output port must be >= 1, got {port}")
        return cls(ActionKind.FORWARD, out_port=port)

    @classmethod
    def tunnel(cls, vlan: int, mac: MacPattern | str) -> "Action":
        if isinstance(mac, str):
            mac = MacPattern.parse(mac)
        return cls(ActionKind.TUNNEL, tunnel_vlan=vlan, tunnel_mac=mac)

    def tokens(self) -> list[str]:
        if self.kind is ActionKind.FORWARD:
            return ["fwd", str(self.out_port)]
        if self.kind is ActionKind.TUNNEL:
            return ["tunnel", str(self.tunnel_vlan), str(self.tunnel_mac)]
        return [self.kind.value]


class RuleStats:
    """Per-rule counters (duration and packets/bytes); written only by the simulator."""

    __slots__ = ("packets", "bytes", "first_seen", "last_seen", "_lock")

    def __init__(self):
        self.packets = 0
        self.bytes = 0
        self.first_seen: Optional[float] = None
        self.last_seen: Optional[float] = None
        self._lock = threading.Lock()

    def record(self, size: int, now: float) -> None:
        with self._lock:
            self.packets += 1
            self.bytes += size
            if self.first_seen is None:
                self.first_seen = now
            self.last_seen = now

    @property
    def duration(self) -> float:
        if self.first_seen is None:
            return 0.0
        return self.last_seen - self.first_seen

    def as_dict(self) -> dict:
        return {"duration": self.duration, "packets": self.packets, "bytes": self.bytes}

    def __repr__(self) -> str:
        return f"RuleStats(packets={self.packets}, bytes={self.bytes}, duration={self.duration})"


@dataclass(frozen=True)
class FlowRule:
    priority: int
    protocol: Protocol
    header: HeaderPattern
    action: Action
    origin: Origin = Origin.CONTROLLER
    label: str = field(default="", compare=False)
    stats: RuleStats = field(default_factory=RuleStats, compare=False, repr=False)

    def __post_init__(self):
        if self.priority < 0:
            raise InvalidInputError(f"rule priority must be >= 0, got {self.priority}")

    def matches(self, pkt: "Packet") -> bool:
        if self.protocol is not Protocol.ANY and self.protocol is not pkt.protocol:
            return False
        return self.header.matches(pkt)

    def tokens(self) -> list[str]:
        h = self.header
        return [
            str(self.priority),
            self.protocol.value,
            "*" if h.in_port is None else str(h.in_port),
            str(h.src_mac),
            str(h.dst_mac),
            str(h.src_ip),
            str(h.dst_ip),
            str(h.src_port),
            str(h.dst_port),
            "*" if h.vlan is None else str(h.vlan),
            *self.action.tokens(),
            self.origin.value,
        ]

    def __str__(self) -> str:
        return " ".join(self.tokens())


def parse_rule(tokens: Sequence[str] | str) -> FlowRule:
    if isinstance(tokens, str):
        tokens = tokens.split()
    tokens = list(tokens)
    if len(tokens) < 12:
        raise InvalidInputError(f"rule needs at least 12 fields, got {len(tokens)}: {' '.join(tokens)}")
    try:
        priority = int(tokens[0])
    except ValueError:
        raise InvalidInputError(f"bad priority {tokens[0]!r}") from None
    protocol = _enum_value(Protocol, tokens[1], "protocol")
    header = HeaderPattern(
        in_port=_parse_optional_int(tokens[2], "in_port", 1, 0xFFFF),
        src_mac=MacPattern.parse(tokens[3]),
        dst_mac=MacPattern.parse(tokens[4]),
        src_ip=IpPattern.parse(tokens[5]),
        dst_ip=IpPattern.parse(tokens[6]),
        src_port=PortRange.parse(tokens[7]),
        dst_port=PortRange.parse(tokens[8]),
        vlan=_parse_optional_int(tokens[9], "vlan", 0, 4095),
    )
    verb, rest = tokens[10].lower(), tokens[11:]
    if verb in ("drop", "allow"):
        action, want = (Action.drop() if verb == "drop" else Action.allow()), 1
    elif verb in ("fwd", "forward"):
        action, want = Action.forward(_int(rest[0], "output port")), 2
    elif verb == "tunnel":
        if len(rest) < 3:
            raise InvalidInputError("tunnel action needs <vlan> <mac> arguments")
        action, want = Action.tunnel(_int(rest[0], "tunnel vlan"), MacPattern.parse(rest[1])), 3
    else:
        raise InvalidInputError(f"unknown action {tokens[10]!r}")
    if len(rest) != want:
        raise InvalidInputError(f"wrong number of fields after action in: {' '.join(tokens)}")
    origin = _enum_value(Origin, rest[-1], "origin")
    return FlowRule(priority, protocol, header, action, origin)


def _int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InvalidInputError(f"bad {what} {text!r}") from None


def _enum_value(enum_cls, text: str, what: str):
    try:
        return enum_cls(text.lower())
    except ValueError:
        raise InvalidInputError(f"unknown {what} {text!r}") from None


@dataclass(frozen=True)
class Packet:
    """A concrete point in header space.  Addresses are stored as integers."""

    protocol: Protocol
    src_mac: int
    dst_mac: int
    src_ip: int
    dst_ip: int
    src_port: int = 1024
    dst_port: int = 80
    vlan: int = 0
    in_port: int = 0
    size: int = 100

    def __post_init__(self):
        if self.protocol is Protocol.ANY:
            raise InvalidInputError("packet protocol must be concrete")

    @classmethod
    def make(cls, protocol: Protocol | str, src_mac: str, dst_mac: str, src_ip: str, dst_ip: str, **kw) -> "Packet":
        if isinstance(protocol, str):
            protocol = Protocol(protocol.lower())
        return cls(protocol, mac_to_int(src_mac), mac_to_int(dst_mac), ip_to_int(src_ip), ip_to_int(dst_ip), **kw)

    def as_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "in_port": self.in_port,
            "src_mac": int_to_mac(self.src_mac),
            "dst_mac": int_to_mac(self.dst_mac),
            "src_ip": int_to_ip(self.src_ip),
            "dst_ip": int_to_ip(self.dst_ip),
            "src_port": self.src_port,
            "dst_port": self.dst_port,
            "vlan": self.vlan,
            "size": self.size,
        }


_PROTO_CODE = {Protocol.ANY: 0, Protocol.TCP: 1, Protocol.UDP: 2}
# Below this size a plain scan beats building numpy masks.
_INDEX_THRESHOLD = 48


class FlowTable:
    """Ordered flow rules of one switch.

    Lookup is highest priority first, ties to the earliest inserted rule.
    Large tables are matched through a vectorised index that is rebuilt
    lazily after each modification.
    """

    def __init__(self, rules: Iterable[FlowRule] = ()):
        self._rules: list[FlowRule] = list(rules)
        self._index = None
        self._lock = threading.Lock()

    def append(self, rule: FlowRule) -> int:
        with self._lock:
            self._rules.append(rule)
            self._index = None
            return len(self._rules) - 1

    def extend(self, rules: Iterable[FlowRule]) -> None:
        with self._lock:
            self._rules.extend(rules)
            self._index = None

    def clear(self) -> None:
        with self._lock:
            self._rules.clear()
            self._index = None

    def __len__(self) -> int:
        return len(self._rules)

    def __iter__(self) -> Iterator[FlowRule]:
        return iter(self._rules)

    def __getitem__(self, i: int) -> FlowRule:
        return self._rules[i]

    def rules(self) -> list[FlowRule]:
        return list(self._rules)

    def lookup(self, pkt: Packet) -> Optional[tuple[int, FlowRule]]:
        if len(self._rules) < _INDEX_THRESHOLD:
            return scan(self._rules, pkt)
        i = self.compile().lookup(pkt)
        return None if i is None else (i, self._rules[i])

    def compile(self) -> "_CompiledTable":
        """Build (or return) the lookup index, as a switch does when rules are installed."""
        index = self._index
        if index is None:
            with self._lock:
                if self._index is None:
                    self._index = _CompiledTable(self._rules)
                index = self._index
        return index


def scan(rules: Sequence[FlowRule], pkt: Packet) -> Optional[tuple[int, FlowRule]]:
    best = None
    for i, rule in enumerate(rules):
        if (best is None or rule.priority > best[1].priority) and rule.matches(pkt):
            best = (i, rule)
    return best


class _Block:
    """Vectorised first-match over a rank-ordered subset of rules."""

    def __init__(self, rs: Sequence[FlowRule]):
        n = len(rs)

        def col(fn):
            return np.fromiter((fn(r) for r in rs), dtype=np.int64, count=n)

        self.proto = col(lambda r: _PROTO_CODE[r.protocol])
        self.in_port = col(lambda r: -1 if r.header.in_port is None else r.header.in_port)
        self.vlan = col(lambda r: -1 if r.header.vlan is None else r.header.vlan)
        self.smac_v = col(lambda r: r.header.src_mac.value)
        self.smac_m = col(lambda r: r.header.src_mac.mask)
        self.dmac_v = col(lambda r: r.header.dst_mac.value)
        self.dmac_m = col(lambda r: r.header.dst_mac.mask)
        self.sip_v = col(lambda r: r.header.src_ip.network)
        self.sip_m = col(lambda r: r.header.src_ip.mask)
        self.dip_v = col(lambda r: r.header.dst_ip.network)
        self.dip_m = col(lambda r: r.header.dst_ip.mask)
        self.sp_lo = col(lambda r: r.header.src_port.lo)
        self.sp_hi = col(lambda r: r.header.src_port.hi)
        self.dp_lo = col(lambda r: r.header.dst_port.lo)
        self.dp_hi = col(lambda r: r.header.dst_port.hi)

    def first(self, pkt: Packet) -> Optional[int]:
        m = (self.smac_m & pkt.src_mac) == self.smac_v
        m &= (self.dmac_m & pkt.dst_mac) == self.dmac_v
        m &= (self.dip_m & pkt.dst_ip) == self.dip_v
        m &= (self.sip_m & pkt.src_ip) == self.sip_v
        m &= (self.proto == 0) | (self.proto == _PROTO_CODE[pkt.protocol])
        m &= (self.in_port < 0) | (self.in_port == pkt.in_port)
        m &= (self.vlan < 0) | (self.vlan == pkt.vlan)
        m &= (self.sp_lo <= pkt.src_port) & (self.sp_hi >= pkt.src_port)
        m &= (self.dp_lo <= pkt.dst_port) & (self.dp_hi >= pkt.dst_port)
        k = int(m.argmax())
        return k if m[k] else None


class _Bucket:
    __slots__ = ("ranks", "rules", "block")

    def __init__(self, ranks: list[int], rules: list[FlowRule]):
        self.ranks = ranks
        self.rules = rules
        self.block = _Block(rules) if len(rules) >= _INDEX_THRESHOLD else None

    def first(self, pkt: Packet, bound: int) -> Optional[int]:
        """Best rank in this bucket that matches and beats ``bound``."""
        if self.block is not None:
            k = self.block.first(pkt)
            if k is None or self.ranks[k] >= bound:
                return None
            return self.ranks[k]
        for rank, rule in zip(self.ranks, self.rules):
            if rank >= bound:
                return None
            if rule.matches(pkt):
                return rank
        return None


class _CompiledTable:
    """Tuple-space classifier keyed on destination prefix.

    Rules are ranked by (priority desc, insertion asc) and bucketed by
    (dst prefix length, dst network), so a lookup probes one bucket per
    distinct prefix length instead of the whole table.
    """

    def __init__(self, rules: Sequence[FlowRule]):
        order = sorted(range(len(rules)), key=lambda i: (-rules[i].priority, i))
        self.order = order
        grouped: dict[int, dict[int, tuple[list[int], list[FlowRule]]]] = {}
        for rank, i in enumerate(order):
            dst = rules[i].header.dst_ip
            ranks, rs = grouped.setdefault(dst.prefixlen, {}).setdefault(dst.network, ([], []))
            ranks.append(rank)
            rs.append(rules[i])
        self.groups = [
            (IpPattern(0, plen).mask, {net: _Bucket(*v) for net, v in buckets.items()})
            for plen, buckets in sorted(grouped.items(), reverse=True)
        ]

    def lookup(self, pkt: Packet) -> Optional[int]:
        best = len(self.order)
        dst = pkt.dst_ip
        for mask, buckets in self.groups:
            bucket = buckets.get(dst & mask)
            if bucket is not None:
                rank = bucket.first(pkt, best)
                if rank is not None:
                    best = rank
        return None if best == len(self.order) else self.order[best]


@dataclass(frozen=True)
class SlaIntent:
    protocol: Protocol
    src: IpPattern
    dst: IpPattern
    verdict: Verdict

    def covers(self, protocol: Protocol, src_ip: int, dst_ip: int) -> bool:
        if self.protocol is not Protocol.ANY and self.protocol is not protocol:
            return False
        return self.src.matches(src_ip) and self.dst.matches(dst_ip)

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "protocol": self.protocol.value,
            "src": str(self.src.as_network()),
            "dst": str(self.dst.as_network()),
        }

    def __str__(self) -> str:
        d = self.as_dict()
        return f"{d['verdict']} {d['protocol']} {d['src']} {d['dst']}"


@dataclass(frozen=True)
class SlaPolicy:
    """Ordered reachability intents with first-match semantics; unmatched traffic is allowed."""

    intents: tuple[SlaIntent, ...] = ()

    def first_match(self, protocol: Protocol, src_ip: int, dst_ip: int) -> Optional[int]:
        for i, intent in enumerate(self.intents):
            if intent.covers(protocol, src_ip, dst_ip):
                return i
        return None

    def verdict(self, protocol: Protocol, src_ip: int, dst_ip: int) -> Verdict:
        i = self.first_match(protocol, src_ip, dst_ip)
        return Verdict.ALLOW if i is None else self.intents[i].verdict

    def __len__(self) -> int:
        return len(self.intents)


def parse_sla(text: str) -> SlaPolicy:
    """Parse ``verdict proto src_cidr dst_cidr`` lines; ``#`` starts a comment."""
    intents = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InvalidInputError(f"SLA line {lineno}: expected 4 fields, got {len(parts)}")
        verdict = _enum_value(Verdict, parts[0], "verdict")
        protocol = _enum_value(Protocol, parts[1], "protocol")
        intents.append(SlaIntent(protocol, IpPattern.parse(parts[2]), IpPattern.parse(parts[3]), verdict))
    return SlaPolicy(tuple(intents))


def format_sla(policy: SlaPolicy) -> str:
    return "".join(f"{intent}\n" for intent in policy.intents)


def parse_rule_file(text: str) -> dict[str, list[FlowRule]]:
    """Parse a rule file: ``[switch-id]`` headers followed by that switch's rules."""
    tables: dict[str, list[FlowRule]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            tables.setdefault(current, [])
            continue
        if current is None:
            raise InvalidInputError(f"rule file line {lineno}: rule before any [switch] header")
        try:
            tables[current].append(parse_rule(line))
        except InvalidInputError as exc:
            raise InvalidInputError(f"rule file line {lineno}: {exc}") from None
    return tables


def format_rule_file(tables: dict[str, Iterable[FlowRule]]) -> str:
    out = []
    for switch, rules in tables.items():
        out.append(f"[{switch}]")
        out.extend(str(r) for r in rules)
    return "\n".join(out) + "\n"
