import ipaddress

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trufl.errors import InvalidInputError
from trufl.rules import parse_rule
from trufl.topology import (
    NetworkTopology,
    NodeKind,
    SecurityDomain,
    build_topology,
    iter_host_pairs,
    load_topology,
    motivating_example,
    save_topology,
    validate,
)


def codes(topo):
    return sorted({e.code for e in validate(topo)})


def test_build_topology_shape():
    t = build_topology(256, 4, 2)
    assert len(t.hosts) == 256
    assert len(t.switches) == 64
    assert len(t.controllers) == 2
    assert len(t.ids(NodeKind.ROOT)) == 1
    # host links + controller links + intra-domain chains + one gateway
    assert len(t.links) == 256 + 64 + 62 + 1
    assert validate(t) == []


def test_build_topology_is_deterministic():
    assert build_topology(16, 4, 2) == build_topology(16, 4, 2)
    assert build_topology(16, 4, 2).dumps() != build_topology(16, 2, 2).dumps()


@pytest.mark.parametrize("args", [(0, 1, 1), (4, 0, 1), (4, 1, 0), (6, 4, 1), (4, 2, 3)])
def test_build_topology_rejects(args):
    with pytest.raises(InvalidInputError):
        build_topology(*args)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(1, 4))
def test_generated_topologies_are_sound(switches, per, doms):
    if doms > switches:
        doms = switches
    t = build_topology(switches * per, per, doms)
    assert validate(t) == []
    # every node lives in exactly one domain, except the root
    for node in t.nodes:
        if t.kind(node) is NodeKind.ROOT:
            continue
        assert t.domain_of(node) is not None
    # every host is wired to a switch of its own domain
    for h in t.hosts:
        sw, _ = t.attachment(h)
        assert t.kind(sw) is NodeKind.SWITCH
        assert t.domain_of(sw) == t.domain_of(h)
    # the switch graph is connected
    first = t.switches[0]
    assert all(t.switch_path(first, s) is not None for s in t.switches)


def test_host_addresses_are_unique():
    t = build_topology(64, 8, 4)
    ips = [t.host_ip(h) for h in t.hosts]
    macs = [t.host_port(h).mac for h in t.hosts]
    assert len(set(ips)) == len(ips) and len(set(macs)) == len(macs)
    assert all(ipaddress.ip_address(ip).is_private for ip in ips)


def test_serialisation_roundtrip(tmp_path):
    t, _ = motivating_example()
    path = tmp_path / "m.topo"
    save_topology(t, path)
    back = load_topology(path)
    assert back == t
    assert back.dumps() == t.dumps()
    assert [str(r) for r in back.tables["Switch1"]] == [str(r) for r in t.tables["Switch1"]]
    assert back.tables["Switch1"][0].label == "rule (2)"


def test_serialisation_sections():
    text = build_topology(4, 2, 1).dumps()
    headers = [line for line in text.splitlines() if line.isupper()]
    assert headers == ["NODES", "PORTS", "LINKS", "DOMAINS", "RULES"]


@pytest.mark.parametrize(
    "text",
    [
        "NODES\nroot\troot\nLINKS\nx:1\ty:1\n",
        "NODES\nroot\tspaceship\n",
        "BOGUS\n",
        "NODES\nroot\n",
    ],
)
def test_loads_rejects_bad_text(text):
    with pytest.raises(InvalidInputError):
        t = NetworkTopology.loads(text)
        if validate(t):
            raise InvalidInputError("invalid")


def test_motivating_example_layout():
    t, sla = motivating_example()
    assert set(t.switches) == {"Switch1", "Switch2"}
    assert validate(t) == []
    assert str(t.host_ip("h1")) == "192.168.4.2"
    assert str(t.host_ip("h3")) == "172.16.10.3"
    assert t.port_towards("Switch1", "Switch2") == 3
    assert len(sla) == 1


def test_validate_reports_each_problem():
    t = build_topology(4, 2, 1)
    t.add_node("stray", NodeKind.SWITCH)
    assert "domain-unassigned" in codes(t)

    t = build_topology(4, 2, 1)
    t.add_node("root2", NodeKind.ROOT)
    assert "root-count" in codes(t)

    t = build_topology(4, 2, 2)
    dom = t.domains["dom0"]
    t.replace_domain(SecurityDomain(dom.id, dom.controller, dom.switches + ("s2",), dom.hosts))
    assert "domain-overlap" in codes(t)

    t = build_topology(4, 2, 1)
    t.tables["s1"].append(parse_rule("1 any 99 * * * * * * * drop controller"))
    assert "rule-in-port" in codes(t)

    t = build_topology(4, 2, 1)
    dom = t.domains["dom0"]
    t.replace_domain(SecurityDomain(dom.id, "ghost", dom.switches, dom.hosts))
    errs = validate(t)
    assert [e.subject for e in errs if e.code == "dangling-reference"] == ["ghost"]


def test_cross_domain_attachment_is_rejected():
    t = build_topology(4, 2, 2)
    h = t.hosts[0]
    home = t.domain_of(h)
    other = next(d for d in t.domains.values() if d.id != home)
    mine = t.domains[home]
    t.replace_domain(SecurityDomain(mine.id, mine.controller, mine.switches, tuple(x for x in mine.hosts if x != h)))
    t.replace_domain(SecurityDomain(other.id, other.controller, other.switches, other.hosts + (h,)))
    assert "cross-domain-attachment" in codes(t)


def test_host_pairs_are_ordered_and_distinct():
    t = build_topology(4, 2, 1)
    pairs = list(iter_host_pairs(t))
    assert len(pairs) == 12
    assert all(a != b for a, b in pairs)


def test_switch_path_and_ports():
    t = build_topology(8, 2, 2)
    path = t.switch_path("s1", "s4")
    assert path[0] == "s1" and path[-1] == "s4"
    for a, b in zip(path, path[1:]):
        port = t.port_towards(a, b)
        assert t.peer((a, port))[0] == b
