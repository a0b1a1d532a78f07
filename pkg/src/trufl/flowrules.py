"""Flow-table matching, multi-hop forwarding simulation and SLA compliance checks.

Forwarding semantics per matched action:

* ``drop`` and table miss: the packet dies at the switch.
* ``fwd p``: out of port p.  A host on the far end receives the packet; a
  switch continues the walk with the peer port as in-port; a controller or
  unwired port drops it.
* ``allow``: out of the port cabled to the host owning the packet's
  destination MAC, if that host sits on this switch and is not the ingress
  port (no hairpin).
* ``tunnel v m``: layer-2 delivery to the first host port on VLAN v whose
  MAC matches m, along the shortest switch path, without consulting the
  tables of the switches in between.
"""

from __future__ import annotations

import enum
import itertools
import random
import time
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from trufl.pki import verify_chain
from trufl.rules import (
    Action,
    ActionKind,
    FlowRule,
    FlowTable,
    HeaderPattern,
    IpPattern,
    MacPattern,
    Origin,
    Packet,
    PortRange,
    Protocol,
    SlaIntent,
    SlaPolicy,
    Verdict,
    scan,
)
from trufl.topology import NetworkTopology, NodeKind, Port, PortKey

PROBE_PORTS = (80, 443, 1024)
WITNESS_SRC_PORT = 1024
WITNESS_DST_PORT = 80


def match(rule: FlowRule, pkt: Packet) -> bool:
    return rule.matches(pkt)


def lookup(table: Sequence[FlowRule] | FlowTable, pkt: Packet) -> Optional[tuple[int, FlowRule]]:
    """Highest-priority match, earliest insertion on ties; ``None`` is a miss (drop)."""
    if isinstance(table, FlowTable):
        return table.lookup(pkt)
    return scan(table, pkt)


class Outcome(enum.Enum):
    DELIVERED = "Delivered"
    DROPPED = "Dropped"
    LOOPED = "Looped"
    NO_ROUTE = "NoRoute"


@dataclass(frozen=True)
class Disposition:
    outcome: Outcome
    path: tuple[str, ...] = ()
    at: Optional[str] = None
    delivered_to: Optional[str] = None
    hits: tuple[tuple[str, int], ...] = ()
    tunneled: bool = False

    @property
    def delivered(self) -> bool:
        return self.outcome is Outcome.DELIVERED

    def as_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "path": list(self.path),
            "at": self.at,
            "delivered_to": self.delivered_to,
            "rules": [{"switch": s, "index": i} for s, i in self.hits],
            "tunneled": self.tunneled,
        }


def _port_key(ingress: Port | PortKey) -> PortKey:
    return ingress.key if isinstance(ingress, Port) else tuple(ingress)


def simulate_forward(
    topology: NetworkTopology,
    pkt: Packet,
    ingress: Port | PortKey,
    hop_limit: Optional[int] = None,
    *,
    indexed: bool = True,
    record_stats: bool = True,
    now: float = 0.0,
) -> Disposition:
    """Walk ``pkt`` from the switch port ``ingress`` through the data plane.

    ``indexed=False`` forces a plain linear scan of every table.
    """
    current = _port_key(ingress)
    nodes = topology.nodes
    if current not in topology.ports or nodes.get(current[0]) is None or nodes[current[0]].kind is not NodeKind.SWITCH:
        return Disposition(Outcome.NO_ROUTE)
    limit = hop_limit if hop_limit is not None else len(topology.switches) + 1
    path: list[str] = []
    hits: list[tuple[str, int]] = []

    while True:
        sw = current[0]
        if len(path) >= limit:
            return Disposition(Outcome.LOOPED, tuple(path), sw, hits=tuple(hits))
        path.append(sw)
        here = replace(pkt, in_port=current[1])
        table = topology.tables.get(sw)
        hit = None
        if table is not None:
            hit = table.lookup(here) if indexed else scan(table.rules(), here)
        if hit is None:
            return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))
        idx, rule = hit
        hits.append((sw, idx))
        if record_stats:
            rule.stats.record(pkt.size, now)
        action = rule.action
        kind = action.kind

        if kind is ActionKind.DROP:
            return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))

        if kind is ActionKind.ALLOW:
            out = topology.host_delivery_port(sw, pkt.dst_mac)
            if out is None or out == current:
                return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))
            return Disposition(Outcome.DELIVERED, tuple(path), sw, topology.peer(out)[0], tuple(hits))

        if kind is ActionKind.FORWARD:
            # OpenFlow never hairpins a plain output back out of the ingress port
            if action.out_port == current[1]:
                return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))
            peer = topology.peer((sw, action.out_port))
            if peer is None or peer[0] not in nodes:
                return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))
            peer_kind = nodes[peer[0]].kind
            if peer_kind is NodeKind.HOST:
                return Disposition(Outcome.DELIVERED, tuple(path), sw, peer[0], tuple(hits))
            if peer_kind is NodeKind.SWITCH:
                current = peer
                continue
            return Disposition(Outcome.DROPPED, tuple(path), sw, hits=tuple(hits))

        # tunnel
        target = topology.find_host_port(action.tunnel_mac, action.tunnel_vlan)
        if target is None:
            return Disposition(Outcome.NO_ROUTE, tuple(path), sw, hits=tuple(hits), tunneled=True)
        far = topology.peer(target.key)
        if far is None or nodes.get(far[0]) is None or nodes[far[0]].kind is not NodeKind.SWITCH:
            return Disposition(Outcome.NO_ROUTE, tuple(path), sw, hits=tuple(hits), tunneled=True)
        l2 = topology.switch_path(sw, far[0])
        if l2 is None:
            return Disposition(Outcome.NO_ROUTE, tuple(path), sw, hits=tuple(hits), tunneled=True)
        full = tuple(path) + tuple(l2[1:])
        return Disposition(Outcome.DELIVERED, full, far[0], target.owner, tuple(hits), tunneled=True)


class ViolationKind(enum.Enum):
    DIRECT = "Direct"
    INDIRECT = "Indirect"
    ROGUE_TUNNEL = "RogueTunnel"
    UNAUTHORIZED_RULE = "UnauthorizedRule"


@dataclass(frozen=True)
class ViolationReport:
    kind: ViolationKind
    path: tuple[str, ...]
    rules: tuple[tuple[str, int], ...]
    witness: Optional[Packet] = None
    ingress: Optional[PortKey] = None
    intent_index: Optional[int] = None
    intent: Optional[SlaIntent] = None
    src_host: Optional[str] = None
    dst_host: Optional[str] = None
    delivered_to: Optional[str] = None

    def as_dict(self, topology: Optional[NetworkTopology] = None) -> dict:
        rules = []
        for s, i in self.rules:
            entry = {"switch": s, "index": i}
            if topology is not None and s in topology.tables and i < len(topology.tables[s]):
                rule = topology.tables[s][i]
                entry["rule"] = str(rule)
                if rule.label:
                    entry["label"] = rule.label
            rules.append(entry)
        return {
            "event": "violation",
            "kind": self.kind.value,
            "intent_index": self.intent_index,
            "intent": None if self.intent is None else self.intent.as_dict(),
            "src_host": self.src_host,
            "dst_host": self.dst_host,
            "delivered_to": self.delivered_to,
            "witness": None if self.witness is None else self.witness.as_dict(),
            "ingress": None if self.ingress is None else f"{self.ingress[0]}:{self.ingress[1]}",
            "path": list(self.path),
            "rules": rules,
        }


def witness_packet(topology: NetworkTopology, src: str, dst: str, protocol: Protocol,
                   src_port: int = WITNESS_SRC_PORT, dst_port: int = WITNESS_DST_PORT) -> Packet:
    sp, dp = topology.host_port(src), topology.host_port(dst)
    return Packet(protocol, sp.mac, dp.mac, int(sp.ip), int(dp.ip), src_port, dst_port, vlan=sp.vlan or 0)


def classify(disp: Disposition) -> ViolationKind:
    if disp.tunneled:
        return ViolationKind.ROGUE_TUNNEL
    if len(disp.path) == 1:
        return ViolationKind.DIRECT
    return ViolationKind.INDIRECT


def check_sla(topology: NetworkTopology, sla: SlaPolicy) -> list[ViolationReport]:
    """Find deliveries the SLA drops, one concrete packet per host pair and protocol.

    A packet is attributed to the first intent covering (protocol, src, dst);
    only drop intents produce reports.  Reports that repeat the same pair,
    kind and rule path (e.g. TCP and UDP taking the same route) are merged.
    """
    hosts = [h for h in topology.hosts if topology.ports_of(h) and topology.host_port(h).ip is not None]
    ip = {h: int(topology.host_port(h).ip) for h in hosts}
    reports: list[ViolationReport] = []
    seen = set()
    drop_intents = [i for i, it in enumerate(sla.intents) if it.verdict is Verdict.DROP]
    if not drop_intents:
        return reports
    for idx in drop_intents:
        intent = sla.intents[idx]
        srcs = [h for h in hosts if intent.src.matches(ip[h])]
        dsts = [h for h in hosts if intent.dst.matches(ip[h])]
        for s in srcs:
            ingress = topology.attachment(s)
            if ingress is None:
                continue
            for d in dsts:
                if s == d:
                    continue
                for proto in (Protocol.TCP, Protocol.UDP):
                    if sla.first_match(proto, ip[s], ip[d]) != idx:
                        continue
                    pkt = witness_packet(topology, s, d, proto)
                    disp = simulate_forward(topology, pkt, ingress, record_stats=False)
                    if not disp.delivered:
                        continue
                    kind = classify(disp)
                    key = (idx, s, d, kind, disp.hits)
                    if key in seen:
                        continue
                    seen.add(key)
                    reports.append(
                        ViolationReport(kind, disp.path, disp.hits, pkt, ingress, idx, intent, s, d, disp.delivered_to)
                    )
    return reports


def check_unauthorized_rules(topology: NetworkTopology, store, *, now: int = 0) -> list[ViolationReport]:
    """Flag locally inserted rules, and every rule on a switch whose chain does not verify."""
    reports = []
    for sw in topology.switches:
        cred = store.get(sw)
        trusted = cred is not None and verify_chain(cred.chain, store.anchors, now).ok
        for i, rule in enumerate(topology.tables.get(sw, ())):
            if rule.origin is Origin.LOCAL or not trusted:
                reports.append(ViolationReport(ViolationKind.UNAUTHORIZED_RULE, (sw,), ((sw, i),)))
    return reports


def brute_force_reachability(
    topology: NetworkTopology,
    src_host: str,
    dst_host: str,
    protocols: Iterable[Protocol] = (Protocol.TCP, Protocol.UDP),
) -> bool:
    """True iff any packet from ``src_host`` addressed to ``dst_host`` is delivered.

    Enumerates every protocol and every (src, dst) port pair from
    ``PROBE_PORTS`` and walks each packet with linear table scans.
    """
    ingress = topology.attachment(src_host)
    if ingress is None:
        return False
    for proto, sport, dport in itertools.product(protocols, PROBE_PORTS, PROBE_PORTS):
        pkt = witness_packet(topology, src_host, dst_host, proto, sport, dport)
        if simulate_forward(topology, pkt, ingress, indexed=False, record_stats=False).delivered:
            return True
    return False


@dataclass(frozen=True)
class EndToEndResult:
    violations: list[ViolationReport]
    wall_clock_ms: float
    rule_count: int


def end_to_end_check(topology: NetworkTopology, sla: SlaPolicy, rule_count: Optional[int] = None) -> EndToEndResult:
    t0 = time.perf_counter()
    violations = check_sla(topology, sla)
    ms = (time.perf_counter() - t0) * 1000.0
    return EndToEndResult(violations, ms, topology.rule_count() if rule_count is None else rule_count)


def generate_rules(
    topology: NetworkTopology,
    count: int,
    seed: int = 42,
    path_fraction: float = 0.01,
) -> int:
    """Install ``count`` pseudorandom rules spread over the switches.

    About ``path_fraction`` of them form host-to-host forwarding paths across
    switches; the rest match random addresses outside the host address plan.
    Tables are compiled on install.  Returns the number installed.
    """
    rng = random.Random(seed)
    switches = topology.switches
    hosts = [h for h in topology.hosts if topology.attachment(h) is not None]
    if not switches or count <= 0:
        return 0
    rules: dict[str, list[FlowRule]] = {s: [] for s in switches}
    budget = int(round(count * path_fraction))
    made = 0
    while budget > 0 and len(hosts) >= 2:
        s, d = rng.sample(hosts, 2)
        a, b = topology.attachment(s), topology.attachment(d)
        route = topology.switch_path(a[0], b[0])
        if route is None or len(route) > budget:
            break
        sp, dp = topology.host_port(s), topology.host_port(d)
        header = HeaderPattern(src_ip=IpPattern(int(sp.ip), 32), dst_ip=IpPattern(int(dp.ip), 32))
        prio = rng.randint(1001, 2000)
        for here, nxt in zip(route, route[1:]):
            rules[here].append(FlowRule(prio, Protocol.ANY, header, Action.forward(topology.port_towards(here, nxt))))
        rules[route[-1]].append(FlowRule(prio, Protocol.ANY, header, Action.forward(b[1])))
        budget -= len(route)
        made += len(route)
    for _ in range(count - made):
        sw = rng.choice(switches)
        rules[sw].append(_noise_rule(rng, len(topology.ports_of(sw))))
    for sw, batch in rules.items():
        topology.tables[sw].extend(batch)
        topology.tables[sw].compile()
    return count


def _noise_rule(rng: random.Random, n_ports: int) -> FlowRule:
    # 100.64.0.0/10 and locally administered 0x06 MACs never collide with hosts
    dst = IpPattern((100 << 24) | (64 << 16) | rng.getrandbits(22), rng.choice((32, 32, 24)))
    dst = IpPattern(dst.network & dst.mask, dst.prefixlen)
    header = HeaderPattern(
        src_mac=MacPattern() if rng.random() < 0.5 else MacPattern.exact((0x06 << 40) | rng.getrandbits(40)),
        dst_ip=dst,
        dst_port=PortRange() if rng.random() < 0.6 else PortRange.parse(str(rng.choice(PROBE_PORTS))),
    )
    if rng.random() < 0.4 or n_ports == 0:
        action = Action.drop()
    else:
        action = Action.forward(rng.randint(1, n_ports))
    proto = rng.choice((Protocol.ANY, Protocol.TCP, Protocol.UDP))
    return FlowRule(rng.randint(1, 1000), proto, header, action)


def domain_isolation_sla(topology: NetworkTopology) -> SlaPolicy:
    """Drop intents between every ordered pair of generated domains (10.d.0.0/16)."""
    n = len(topology.domains)
    intents = []
    for a in range(n):
        for b in range(n):
            if a != b:
                intents.append(
                    SlaIntent(Protocol.ANY, IpPattern.parse(f"10.{a}.0.0/16"), IpPattern.parse(f"10.{b}.0.0/16"), Verdict.DROP)
                )
    return SlaPolicy(tuple(intents))
