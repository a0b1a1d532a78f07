"""Multi-tenant SDN topology model, scenario generators and the text format.

Generated address scheme (``build_topology``): the k-th host (0-based, in
creation order) of domain d gets IP ``10.d.(k // 250).(k % 250 + 1)`` and MAC
``02:00:00:dd:kh:kl`` (kh/kl the high and low bytes of k).  Switch j (0-based,
global) port p has MAC ``02:01:jh:jl:ph:pl``; controller d port p has
``02:02:dd:00:ph:pl``.

Text format: sections ``NODES``, ``PORTS``, ``LINKS``, ``DOMAINS``, ``RULES``,
each header alone on a line, one tab-separated record per line after it::

    NODES    id  kind
    PORTS    owner  index  mac  ip|-  vlan|-
    LINKS    owner_a  index_a  owner_b  index_b
    DOMAINS  id  controller  switch,switch,...  host,host,...
    RULES    switch  <rule fields, as in the rule grammar>  [#label]

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import enum
import ipaddress
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional

from trufl.errors import InvalidInputError
from trufl.rules import (
    Action,
    FlowRule,
    FlowTable,
    HeaderPattern,
    IpPattern,
    MacPattern,
    Origin,
    Protocol,
    SlaIntent,
    SlaPolicy,
    Verdict,
    int_to_mac,
    mac_to_int,
    parse_rule,
)


class NodeKind(enum.Enum):
    HOST = "host"
    SWITCH = "switch"
    CONTROLLER = "controller"
    ROOT = "root"
    BRIDGE = "bridge"


PortKey = tuple[str, int]


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind


@dataclass(frozen=True)
class Port:
    owner: str
    index: int
    mac: int
    ip: Optional[ipaddress.IPv4Address] = None
    vlan: Optional[int] = None

    @property
    def key(self) -> PortKey:
        return (self.owner, self.index)


@dataclass(frozen=True)
class Link:
    a: PortKey
    b: PortKey

    def other(self, end: PortKey) -> PortKey:
        return self.b if end == self.a else self.a

    def owners(self) -> tuple[str, str]:
        return (self.a[0], self.b[0])


@dataclass(frozen=True)
class SecurityDomain:
    id: str
    controller: str
    switches: tuple[str, ...] = ()
    hosts: tuple[str, ...] = ()


class NetworkTopology:
    """Nodes, ports, links, security domains and per-switch flow tables.

    The containers are plain dicts and lists so that tests can corrupt them
    directly; derived lookups are cached and dropped on every mutation made
    through the ``add_*`` methods.
    """

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.ports: dict[PortKey, Port] = {}
        self.links: list[Link] = []
        self.domains: dict[str, SecurityDomain] = {}
        self.tables: dict[str, FlowTable] = {}
        self._cache: dict = {}
        self._last_port: dict[str, int] = {}

    # construction

    def _touch(self, keep: tuple[str, ...] = ()) -> None:
        kept = {k: self._cache[k] for k in keep if k in self._cache}
        self._cache.clear()
        self._cache.update(kept)

    def next_port_index(self, owner: str) -> int:
        return self._last_port.get(owner, 0) + 1

    def add_node(self, node_id: str, kind: NodeKind) -> Node:
        if not node_id or any(c.isspace() or c == "," for c in node_id):
            raise InvalidInputError(f"bad node id {node_id!r}")
        if node_id in self.nodes:
            raise InvalidInputError(f"duplicate node id {node_id!r}")
        node = Node(node_id, kind)
        self.nodes[node_id] = node
        if kind is NodeKind.SWITCH:
            self.tables[node_id] = FlowTable()
        self._touch()
        return node

    def add_port(self, owner: str, mac: int, ip=None, vlan: Optional[int] = None, index: Optional[int] = None) -> Port:
        if index is None:
            index = self.next_port_index(owner)
        if (owner, index) in self.ports:
            raise InvalidInputError(f"duplicate port {owner}:{index}")
        if ip is not None and not isinstance(ip, ipaddress.IPv4Address):
            ip = ipaddress.IPv4Address(ip)
        port = Port(owner, index, mac, ip, vlan)
        self.ports[port.key] = port
        self._last_port[owner] = max(index, self._last_port.get(owner, 0))
        self._touch(keep=("peers",))
        return port

    def add_link(self, a: PortKey, b: PortKey) -> Link:
        peers = self._peers()
        for end in (a, b):
            if end not in self.ports:
                raise InvalidInputError(f"link endpoint {end[0]}:{end[1]} is not a port")
            if end in peers:
                raise InvalidInputError(f"port {end[0]}:{end[1]} is already linked")
        if a == b:
            raise InvalidInputError("link endpoints must differ")
        link = Link(a, b)
        self.links.append(link)
        peers[a], peers[b] = b, a
        self._touch(keep=("peers",))
        return link

    def connect(self, a: str, b: str, a_mac: int, b_mac: int, **port_kw) -> Link:
        pa = self.add_port(a, a_mac)
        pb = self.add_port(b, b_mac, **port_kw)
        return self.add_link(pa.key, pb.key)

    def add_domain(self, domain: SecurityDomain) -> None:
        if domain.id in self.domains:
            raise InvalidInputError(f"duplicate domain id {domain.id!r}")
        self.domains[domain.id] = domain
        self._touch()

    def replace_domain(self, domain: SecurityDomain) -> None:
        self.domains[domain.id] = domain
        self._touch()

    def install(self, switch: str, rule: FlowRule) -> int:
        """Append a rule to a switch's table and return its index."""
        if switch not in self.tables:
            raise InvalidInputError(f"{switch!r} has no flow table")
        return self.tables[switch].append(rule)

    # queries

    def ids(self, kind: NodeKind) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind is kind]

    @property
    def hosts(self) -> list[str]:
        return self.ids(NodeKind.HOST)

    @property
    def switches(self) -> list[str]:
        return self.ids(NodeKind.SWITCH)

    @property
    def controllers(self) -> list[str]:
        return self.ids(NodeKind.CONTROLLER)

    def kind(self, node_id: str) -> NodeKind:
        return self.nodes[node_id].kind

    def _cached(self, key, build):
        value = self._cache.get(key)
        if value is None:
            value = self._cache[key] = build()
        return value

    def _peers(self) -> dict[PortKey, PortKey]:
        def build():
            peers = {}
            for link in self.links:
                peers[link.a] = link.b
                peers[link.b] = link.a
            return peers

        return self._cached("peers", build)

    def peer(self, key: PortKey) -> Optional[PortKey]:
        return self._peers().get(key)

    def ports_of(self, node_id: str) -> list[Port]:
        def build():
            by_owner: dict[str, list[Port]] = {}
            for port in self.ports.values():
                by_owner.setdefault(port.owner, []).append(port)
            for ports in by_owner.values():
                ports.sort(key=lambda p: p.index)
            return by_owner

        return self._cached("by_owner", build).get(node_id, [])

    def host_port(self, host: str) -> Port:
        ports = self.ports_of(host)
        if not ports:
            raise InvalidInputError(f"host {host!r} has no port")
        return ports[0]

    def attachment(self, host: str) -> Optional[PortKey]:
        """Switch-side port the host is cabled to."""
        peer = self.peer(self.host_port(host).key)
        if peer is None or self.nodes.get(peer[0], Node("", NodeKind.HOST)).kind is not NodeKind.SWITCH:
            return None
        return peer

    def host_ip(self, host: str) -> ipaddress.IPv4Address:
        return self.host_port(host).ip

    def domain_of(self, node_id: str) -> Optional[str]:
        def build():
            owner = {}
            for dom in self.domains.values():
                owner.setdefault(dom.controller, dom.id)
                for n in (*dom.switches, *dom.hosts):
                    owner.setdefault(n, dom.id)
            return owner

        return self._cached("domain_of", build).get(node_id)

    def host_delivery_port(self, switch: str, mac: int) -> Optional[PortKey]:
        """Port on ``switch`` leading directly to the host that owns ``mac``."""

        def build():
            index = {}
            for link in self.links:
                for mine, theirs in ((link.a, link.b), (link.b, link.a)):
                    me, other = self.nodes.get(mine[0]), self.nodes.get(theirs[0])
                    if me and other and me.kind is NodeKind.SWITCH and other.kind is NodeKind.HOST:
                        port = self.ports.get(theirs)
                        if port is not None:
                            index.setdefault((mine[0], port.mac), mine)
            return index

        return self._cached("delivery", build).get((switch, mac))

    def switch_adjacency(self) -> dict[str, list[tuple[str, PortKey]]]:
        def build():
            adj: dict[str, list[tuple[str, PortKey]]] = {s: [] for s in self.switches}
            for link in self.links:
                a, b = link.owners()
                if a in adj and b in adj:
                    adj[a].append((b, link.a))
                    adj[b].append((a, link.b))
            return adj

        return self._cached("adjacency", build)

    def switch_path(self, src: str, dst: str) -> Optional[list[str]]:
        """Shortest switch-to-switch path (BFS over inter-switch links)."""
        if src == dst:
            return [src]
        adj = self.switch_adjacency()
        prev = {src: None}
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt, _ in adj.get(cur, ()):
                if nxt not in prev:
                    prev[nxt] = cur
                    if nxt == dst:
                        path = [dst]
                        while prev[path[-1]] is not None:
                            path.append(prev[path[-1]])
                        return path[::-1]
                    queue.append(nxt)
        return None

    def port_towards(self, switch: str, neighbour: str) -> Optional[int]:
        for nxt, key in self.switch_adjacency().get(switch, ()):
            if nxt == neighbour:
                return key[1]
        return None

    def find_host_port(self, mac: MacPattern, vlan: Optional[int]) -> Optional[Port]:
        """First host port (topology order) whose MAC matches and whose VLAN equals ``vlan``."""
        want = vlan or 0
        for port in self.ports.values():
            node = self.nodes.get(port.owner)
            if node and node.kind is NodeKind.HOST and mac.matches(port.mac) and (port.vlan or 0) == want:
                return port
        return None

    def rule_count(self) -> int:
        return sum(len(t) for t in self.tables.values())

    def summary(self) -> dict:
        return {
            "hosts": len(self.hosts),
            "switches": len(self.switches),
            "controllers": len(self.controllers),
            "domains": len(self.domains),
            "links": len(self.links),
            "rules": self.rule_count(),
        }

    # serialization

    def dumps(self) -> str:
        out = ["# trufl topology v1", "NODES"]
        out += [f"{n.id}\t{n.kind.value}" for n in self.nodes.values()]
        out.append("PORTS")
        for p in self.ports.values():
            ip = "-" if p.ip is None else str(p.ip)
            vlan = "-" if p.vlan is None else str(p.vlan)
            out.append(f"{p.owner}\t{p.index}\t{int_to_mac(p.mac)}\t{ip}\t{vlan}")
        out.append("LINKS")
        out += [f"{l.a[0]}\t{l.a[1]}\t{l.b[0]}\t{l.b[1]}" for l in self.links]
        out.append("DOMAINS")
        for d in self.domains.values():
            out.append(f"{d.id}\t{d.controller}\t{','.join(d.switches)}\t{','.join(d.hosts)}")
        out.append("RULES")
        for switch, table in self.tables.items():
            for rule in table:
                label = ["#" + " ".join(rule.label.split())] if rule.label else []
                out.append("\t".join([switch, *rule.tokens(), *label]))
        return "\n".join(out) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NetworkTopology":
        topo = cls()
        section = None
        sections = ("NODES", "PORTS", "LINKS", "DOMAINS", "RULES")
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line in sections:
                section = line
                continue
            f = raw.rstrip("\r\n").split("\t")
            try:
                if section == "NODES":
                    _want(f, 2)
                    topo.add_node(f[0], NodeKind(f[1]))
                elif section == "PORTS":
                    _want(f, 5)
                    topo.add_port(
                        f[0],
                        mac_to_int(f[2]),
                        ip=None if f[3] == "-" else ipaddress.IPv4Address(f[3]),
                        vlan=None if f[4] == "-" else int(f[4]),
                        index=int(f[1]),
                    )
                elif section == "LINKS":
                    _want(f, 4)
                    topo.add_link((f[0], int(f[1])), (f[2], int(f[3])))
                elif section == "DOMAINS":
                    _want(f, 4)
                    topo.add_domain(SecurityDomain(f[0], f[1], _split_ids(f[2]), _split_ids(f[3])))
                elif section == "RULES":
                    if len(f) < 2:
                        raise InvalidInputError("rule record needs a switch id")
                    label = f.pop()[1:] if f[-1].startswith("#") else ""
                    topo.install(f[0], replace(parse_rule(f[1:]), label=label))
                else:
                    raise InvalidInputError("record before any section header")
            except (ValueError, KeyError) as exc:
                raise InvalidInputError(f"topology line {lineno}: {exc}") from None
        return topo

    def __eq__(self, other) -> bool:
        return isinstance(other, NetworkTopology) and self.dumps() == other.dumps()

    __hash__ = None


def _want(fields: list[str], n: int) -> None:
    if len(fields) != n:
        raise InvalidInputError(f"expected {n} tab-separated fields, got {len(fields)}")


def _split_ids(text: str) -> tuple[str, ...]:
    return tuple(x for x in text.split(",") if x)


def load_topology(path) -> NetworkTopology:
    with open(path, encoding="utf-8") as fh:
        return NetworkTopology.loads(fh.read())


def save_topology(topology: NetworkTopology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(topology.dumps())


ROOT_ID = "root"


def build_topology(n_hosts: int, hosts_per_switch: int, n_domains: int) -> NetworkTopology:
    """Generate a deterministic multi-domain topology.

    Switches are dealt round-robin to domains.  Each domain's controller is
    linked to every switch of the domain, the switches of a domain form a
    chain, and the first switches of adjacent domains are joined by a
    gateway link.  Host k sits on switch ``k // hosts_per_switch``.
    """
    for name, value in (("n_hosts", n_hosts), ("hosts_per_switch", hosts_per_switch), ("n_domains", n_domains)):
        if not isinstance(value, int) or value < 1:
            raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    if n_hosts % hosts_per_switch:
        raise InvalidInputError(f"n_hosts={n_hosts} is not divisible by hosts_per_switch={hosts_per_switch}")
    n_switches = n_hosts // hosts_per_switch
    if n_switches < n_domains:
        raise InvalidInputError(f"{n_switches} switches cannot populate {n_domains} domains")
    if n_domains > 256 or n_switches > 65536:
        raise InvalidInputError("topology too large for the address scheme")

    topo = NetworkTopology()
    topo.add_node(ROOT_ID, NodeKind.ROOT)
    controllers = [f"c{d}" for d in range(n_domains)]
    for c in controllers:
        topo.add_node(c, NodeKind.CONTROLLER)
    switches = [f"s{j + 1}" for j in range(n_switches)]
    for s in switches:
        topo.add_node(s, NodeKind.SWITCH)
    switch_index = {s: j for j, s in enumerate(switches)}
    dom_switches: list[list[str]] = [[] for _ in range(n_domains)]
    for j, s in enumerate(switches):
        dom_switches[j % n_domains].append(s)

    def switch_mac(s: str) -> int:
        return (0x0201 << 32) | (switch_index[s] << 16) | topo.next_port_index(s)

    def controller_mac(d: int) -> int:
        return (0x0202 << 32) | (d << 24) | topo.next_port_index(controllers[d])

    dom_hosts: list[list[str]] = [[] for _ in range(n_domains)]
    for k in range(n_hosts):
        host = f"h{k + 1}"
        sw = switches[k // hosts_per_switch]
        d = switch_index[sw] % n_domains
        local = len(dom_hosts[d])
        dom_hosts[d].append(host)
        topo.add_node(host, NodeKind.HOST)
        ip = ipaddress.IPv4Address(f"10.{d}.{local // 250}.{local % 250 + 1}")
        mac = (0x02 << 40) | (d << 16) | local
        hp = topo.add_port(host, mac, ip=ip)
        sp = topo.add_port(sw, switch_mac(sw))
        topo.add_link(sp.key, hp.key)

    for d, members in enumerate(dom_switches):
        for s in members:
            cp = topo.add_port(controllers[d], controller_mac(d))
            sp = topo.add_port(s, switch_mac(s))
            topo.add_link(sp.key, cp.key)
    for members in dom_switches:
        for a, b in zip(members, members[1:]):
            pa = topo.add_port(a, switch_mac(a))
            pb = topo.add_port(b, switch_mac(b))
            topo.add_link(pa.key, pb.key)
    for d in range(n_domains - 1):
        a, b = dom_switches[d][0], dom_switches[d + 1][0]
        pa = topo.add_port(a, switch_mac(a))
        pb = topo.add_port(b, switch_mac(b))
        topo.add_link(pa.key, pb.key)

    for d in range(n_domains):
        topo.add_domain(SecurityDomain(f"dom{d}", controllers[d], tuple(dom_switches[d]), tuple(dom_hosts[d])))
    return topo


MOTIVATING_SWITCHES = ("Switch1", "Switch2")


def motivating_example() -> tuple[NetworkTopology, SlaPolicy]:
    """Two OpenFlow switches with two hosts each and an SLA isolating the two subnets.

    Switch1 carries 192.168.4.2/.3, Switch2 carries 172.16.10.3/.4; all host
    ports are on VLAN 1.  Switch1 forwards traffic from ``*:00:0a:01`` to
    ``*:00:0b:03`` towards Switch2, and Switch2 admits anything addressed to
    ``*:00:0b:03``; together they carry traffic the SLA drops.
    """
    topo = NetworkTopology()
    topo.add_node(ROOT_ID, NodeKind.ROOT)
    topo.add_node("c0", NodeKind.CONTROLLER)
    s1, s2 = MOTIVATING_SWITCHES
    topo.add_node(s1, NodeKind.SWITCH)
    topo.add_node(s2, NodeKind.SWITCH)
    hosts = [
        ("h1", s1, "00:00:00:00:0a:01", "192.168.4.2"),
        ("h2", s1, "00:00:00:00:0a:02", "192.168.4.3"),
        ("h3", s2, "00:00:00:00:0b:03", "172.16.10.3"),
        ("h4", s2, "00:00:00:00:0b:04", "172.16.10.4"),
    ]
    sw_mac = {s1: 0x000000010000, s2: 0x000000020000}
    for name, sw, mac, ip in hosts:
        topo.add_node(name, NodeKind.HOST)
        sp = topo.add_port(sw, sw_mac[sw] + len(topo.ports_of(sw)) + 1)
        hp = topo.add_port(name, mac_to_int(mac), ip=ip, vlan=1)
        topo.add_link(sp.key, hp.key)
    a = topo.add_port(s1, sw_mac[s1] + 3)
    b = topo.add_port(s2, sw_mac[s2] + 3)
    topo.add_link(a.key, b.key)
    for k, sw in enumerate((s1, s2), 1):
        sp = topo.add_port(sw, sw_mac[sw] + 4)
        cp = topo.add_port("c0", 0x0000000C0000 + k)
        topo.add_link(sp.key, cp.key)
    topo.add_domain(SecurityDomain("dom0", "c0", (s1, s2), tuple(h[0] for h in hosts)))

    # FWD_HP: out of Switch1 towards the HP switch (port 3).
    topo.install(
        s1,
        FlowRule(
            100,
            Protocol.ANY,
            HeaderPattern(src_mac=MacPattern.parse("*:00:0a:01"), dst_mac=MacPattern.parse("*:00:0b:03")),
            Action.forward(3),
            label="rule (2)",
        ),
    )
    topo.install(
        s2,
        FlowRule(
            100,
            Protocol.ANY,
            HeaderPattern(src_mac=MacPattern.parse("*:*:*"), dst_mac=MacPattern.parse("*:00:0b:03")),
            Action.allow(),
            label="rule (3)",
        ),
    )
    sla = SlaPolicy(
        (
            SlaIntent(
                Protocol.ANY, IpPattern.parse("192.168.4.0/24"), IpPattern.parse("172.16.10.0/16"), Verdict.DROP
            ),
        )
    )
    return topo, sla


def rogue_tunnel_rule() -> FlowRule:
    """Layer-2 tunnel ``*:00:0a:01|vlan1 -> *:00:0b:03|vlan1`` inserted out of band.

    Priority sits below the controller's rules so it only catches traffic
    those rules leave unmatched.
    """
    return FlowRule(
        50,
        Protocol.ANY,
        HeaderPattern(src_mac=MacPattern.parse("*:00:0a:01"), vlan=1),
        Action.tunnel(1, "*:00:0b:03"),
        origin=Origin.LOCAL,
        label="rule (4)",
    )


@dataclass(frozen=True)
class IntegrityError:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}: {self.message}"


def validate(topology: NetworkTopology) -> list[IntegrityError]:
    """Check every topology invariant; an empty list means the topology is sound."""
    errors: list[IntegrityError] = []
    nodes = topology.nodes
    dangling: dict[str, list[str]] = {}

    def ref(node_id: str, where: str) -> bool:
        if node_id in nodes:
            return True
        dangling.setdefault(node_id, []).append(where)
        return False

    for key, node in nodes.items():
        if key != node.id:
            errors.append(IntegrityError("id-mismatch", key, f"registered under {key!r} but named {node.id!r}"))
    roots = [n.id for n in nodes.values() if n.kind is NodeKind.ROOT]
    if len(roots) != 1:
        errors.append(IntegrityError("root-count", ",".join(roots) or "-", f"expected one root authority, found {len(roots)}"))
    bridges = [n.id for n in nodes.values() if n.kind is NodeKind.BRIDGE]
    if len(bridges) > 1:
        errors.append(IntegrityError("bridge-count", ",".join(bridges), "at most one bridge authority allowed"))

    for key, port in topology.ports.items():
        name = f"{key[0]}:{key[1]}"
        if key != port.key:
            errors.append(IntegrityError("port-key", name, "port registered under a different key"))
        if port.index < 1:
            errors.append(IntegrityError("port-index", name, "port index must be >= 1"))
        if ref(port.owner, f"port {name}") and nodes[port.owner].kind is NodeKind.HOST:
            if port.ip is None:
                errors.append(IntegrityError("host-port-address", name, "host port needs both MAC and IP"))

    seen_ends: dict[PortKey, int] = {}
    for i, link in enumerate(topology.links):
        if link.a == link.b:
            errors.append(IntegrityError("link-self", f"link#{i}", "both ends are the same port"))
        for end in (link.a, link.b):
            if ref(end[0], f"link#{i}") and end not in topology.ports:
                errors.append(IntegrityError("link-port", f"{end[0]}:{end[1]}", f"link#{i} uses a missing port"))
            if end in seen_ends and seen_ends[end] != i:
                errors.append(IntegrityError("port-multiply-linked", f"{end[0]}:{end[1]}", "port used by more than one link"))
            seen_ends[end] = i

    membership: dict[str, list[str]] = {}
    for dom in topology.domains.values():
        if ref(dom.controller, f"domain {dom.id}") and nodes[dom.controller].kind is not NodeKind.CONTROLLER:
            errors.append(IntegrityError("domain-controller", dom.id, f"{dom.controller!r} is not a controller"))
        for member in (*dom.switches, *dom.hosts):
            if ref(member, f"domain {dom.id}"):
                membership.setdefault(member, []).append(dom.id)
        for s in dom.switches:
            if s in nodes and nodes[s].kind is not NodeKind.SWITCH:
                errors.append(IntegrityError("domain-member-kind", s, f"listed as switch of {dom.id}"))
        for h in dom.hosts:
            if h in nodes and nodes[h].kind is not NodeKind.HOST:
                errors.append(IntegrityError("domain-member-kind", h, f"listed as host of {dom.id}"))

    for node in nodes.values():
        if node.kind not in (NodeKind.SWITCH, NodeKind.HOST):
            continue
        doms = membership.get(node.id, [])
        if not doms:
            errors.append(IntegrityError("domain-unassigned", node.id, "belongs to no security domain"))
        elif len(doms) > 1:
            errors.append(IntegrityError("domain-overlap", node.id, f"belongs to domains {', '.join(doms)}"))

    for link in topology.links:
        a, b = link.owners()
        if a not in nodes or b not in nodes:
            continue
        kinds = {nodes[a].kind, nodes[b].kind}
        if kinds == {NodeKind.HOST, NodeKind.SWITCH}:
            host, sw = (a, b) if nodes[a].kind is NodeKind.HOST else (b, a)
            hd, sd = membership.get(host, []), membership.get(sw, [])
            if len(hd) == 1 and len(sd) == 1 and hd != sd:
                errors.append(IntegrityError("cross-domain-attachment", host, f"attached to {sw} of {sd[0]}, not {hd[0]}"))

    for switch, table in topology.tables.items():
        if not ref(switch, "flow table"):
            continue
        if nodes[switch].kind is not NodeKind.SWITCH:
            errors.append(IntegrityError("table-owner", switch, "flow table on a non-switch node"))
            continue
        for i, rule in enumerate(table):
            if rule.header.in_port is not None and (switch, rule.header.in_port) not in topology.ports:
                errors.append(IntegrityError("rule-in-port", f"{switch}#{i}", f"in_port {rule.header.in_port} does not exist"))

    for missing, where in dangling.items():
        errors.append(IntegrityError("dangling-reference", missing, "referenced by " + ", ".join(where)))
    return errors


def with_domain_member(topology: NetworkTopology, domain_id: str, *, switch: str | None = None, host: str | None = None) -> None:
    dom = topology.domains[domain_id]
    topology.replace_domain(
        replace(
            dom,
            switches=dom.switches + ((switch,) if switch else ()),
            hosts=dom.hosts + ((host,) if host else ()),
        )
    )


def iter_host_pairs(topology: NetworkTopology) -> Iterator[tuple[str, str]]:
    hosts = topology.hosts
    for s in hosts:
        for d in hosts:
            if s != d:
                yield s, d
