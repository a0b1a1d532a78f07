"""Random scenario generators shared by the oracle and acceptance tests."""

import random

from trufl.flowrules import brute_force_reachability, check_sla
from trufl.rules import (
    Action,
    FlowRule,
    HeaderPattern,
    IpPattern,
    MacPattern,
    Protocol,
    SlaIntent,
    SlaPolicy,
    Verdict,
    int_to_mac,
)
from trufl.topology import NetworkTopology, build_topology

SHAPES = [(2, 1, 1), (2, 2, 1), (4, 1, 2), (4, 2, 2), (4, 1, 1), (6, 2, 3), (6, 3, 2), (8, 2, 2), (8, 4, 2), (8, 1, 3)]


def _ip_pattern(rng: random.Random, topo: NetworkTopology) -> IpPattern:
    h = rng.choice(topo.hosts)
    ip = int(topo.host_port(h).ip)
    plen = rng.choice([0, 0, 8, 16, 24, 32, 32])
    return IpPattern(ip & IpPattern(0, plen).mask, plen)


def _mac_pattern(rng: random.Random, topo: NetworkTopology) -> MacPattern:
    roll = rng.random()
    if roll < 0.4:
        return MacPattern()
    mac = topo.host_port(rng.choice(topo.hosts)).mac
    if roll < 0.8:
        return MacPattern.exact(mac)
    return MacPattern.parse("*:" + int_to_mac(mac)[9:])  # last three octets


def random_rule(rng: random.Random, topo: NetworkTopology, switch: str) -> FlowRule:
    ports = [p.index for p in topo.ports_of(switch)]
    header = HeaderPattern(
        in_port=rng.choice(ports) if rng.random() < 0.15 else None,
        src_mac=_mac_pattern(rng, topo),
        dst_mac=_mac_pattern(rng, topo),
        src_ip=_ip_pattern(rng, topo),
        dst_ip=_ip_pattern(rng, topo),
    )
    roll = rng.random()
    if roll < 0.25:
        action = Action.drop()
    elif roll < 0.5:
        action = Action.allow()
    elif roll < 0.93:
        action = Action.forward(rng.choice(ports))
    else:
        mac = topo.host_port(rng.choice(topo.hosts)).mac
        action = Action.tunnel(0, int_to_mac(mac))
    return FlowRule(rng.randint(0, 20), rng.choice(list(Protocol)), header, action)


def random_sla(rng: random.Random, topo: NetworkTopology) -> SlaPolicy:
    intents = []
    for _ in range(rng.randint(1, 4)):
        verdict = Verdict.DROP if rng.random() < 0.75 else Verdict.ALLOW
        intents.append(SlaIntent(rng.choice(list(Protocol)), _ip_pattern(rng, topo), _ip_pattern(rng, topo), verdict))
    return SlaPolicy(tuple(intents))


def random_instance(rng: random.Random, max_rules: int = 200):
    n_hosts, per, doms = rng.choice(SHAPES)
    topo = build_topology(n_hosts, per, doms)
    n_rules = rng.randint(0, max_rules)
    for _ in range(n_rules):
        sw = rng.choice(topo.switches)
        topo.install(sw, random_rule(rng, topo, sw))
    return topo, random_sla(rng, topo)


def expected_violations(topo: NetworkTopology, sla: SlaPolicy) -> set:
    """Ground truth from brute-force reachability: (intent, src, dst) triples.

    check_sla merges a UDP report into the TCP one when both take the same
    rule path, so verdicts are compared per host pair and intent.
    """
    out = set()
    hosts = topo.hosts
    ip = {h: int(topo.host_port(h).ip) for h in hosts}
    for s in hosts:
        for d in hosts:
            if s == d:
                continue
            for proto in (Protocol.TCP, Protocol.UDP):
                idx = sla.first_match(proto, ip[s], ip[d])
                if idx is None or sla.intents[idx].verdict is not Verdict.DROP:
                    continue
                if brute_force_reachability(topo, s, d, [proto]):
                    out.add((idx, s, d))
    return out


def reported_violations(topo: NetworkTopology, sla: SlaPolicy) -> set:
    return {(v.intent_index, v.src_host, v.dst_host) for v in check_sla(topo, sla)}
