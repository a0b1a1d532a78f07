import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trufl.errors import InvalidInputError
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
    format_rule_file,
    format_sla,
    int_to_mac,
    mac_to_int,
    parse_rule,
    parse_rule_file,
    parse_sla,
    scan,
)


def test_mac_suffix_pattern_is_left_padded():
    pat = MacPattern.parse("*:00:0b:03")
    assert str(pat) == "*:*:*:00:0b:03"
    assert pat.matches(mac_to_int("aa:bb:cc:00:0b:03"))
    assert pat.matches(mac_to_int("00:00:00:00:0b:03"))
    # the padded form pins the fourth octet to 00
    assert not pat.matches(mac_to_int("aa:bb:cc:cc:0b:03"))
    assert not pat.matches(mac_to_int("aa:bb:cc:00:0b:04"))


@pytest.mark.parametrize("text", ["00:0b:03", "*:*:*:*:*:*:*", "*:0g:01", "*:1:02", "zz"])
def test_mac_pattern_rejects_malformed(text):
    with pytest.raises(InvalidInputError):
        MacPattern.parse(text)


def test_wildcards_everywhere():
    assert MacPattern.parse("*").is_wildcard
    assert MacPattern.parse("*:*:*").is_wildcard
    assert str(IpPattern.parse("*")) == "*"
    assert str(PortRange.parse("*")) == "*"


def test_ip_pattern_normalises_host_bits():
    pat = IpPattern.parse("172.16.10.0/16")
    assert str(pat) == "172.16.0.0/16"
    assert pat.matches(int(IpPattern.parse("172.16.200.9/32").network))
    assert not pat.matches(int(IpPattern.parse("172.17.0.1/32").network))


def test_port_range_bounds():
    assert PortRange.parse("80-90").matches(85)
    assert not PortRange.parse("80").matches(81)
    with pytest.raises(InvalidInputError):
        PortRange(10, 5)
    with pytest.raises(InvalidInputError):
        PortRange.parse("70000")


def test_parse_rule_roundtrip_and_actions():
    r = parse_rule("100 tcp 2 *:00:0a:01 * 10.0.0.0/8 10.1.2.3/32 * 80 1 fwd 3 controller")
    assert r.priority == 100 and r.protocol is Protocol.TCP
    assert r.header.in_port == 2 and r.header.vlan == 1
    assert r.action == Action.forward(3)
    assert parse_rule(str(r)) == r
    t = parse_rule("50 any * *:00:0a:01 * * * * * 1 tunnel 1 *:00:0b:03 local")
    assert t.action.kind is ActionKind.TUNNEL and t.origin is Origin.LOCAL
    assert t.action.tunnel_mac == MacPattern.parse("*:00:0b:03")
    assert parse_rule(str(t)) == t


@pytest.mark.parametrize(
    "text",
    [
        "",
        "100 tcp * * * * *",
        "x tcp * * * * * * * * drop controller",
        "100 icmp * * * * * * * * drop controller",
        "100 tcp * * * * * * * * fwd controller",
        "100 tcp * * * * * * * * fwd 0 controller",
        "100 tcp * * * * * * * * drop remote",
        "100 tcp * * * * * * * * jump controller",
        "100 tcp * * * * * * * * drop controller extra",
    ],
)
def test_parse_rule_rejects(text):
    with pytest.raises(InvalidInputError):
        parse_rule(text)


def test_sla_parse_format_roundtrip():
    text = "drop any 192.168.4.0/24 172.16.0.0/16\n# comment\nallow tcp * 10.0.0.0/8\n"
    sla = parse_sla(text)
    assert len(sla) == 2
    assert parse_sla(format_sla(sla)) == sla
    with pytest.raises(InvalidInputError):
        parse_sla("deny any * *")


def test_sla_first_match_and_default_allow():
    sla = SlaPolicy(
        (
            SlaIntent(Protocol.TCP, IpPattern.parse("10.0.0.0/8"), IpPattern(), Verdict.ALLOW),
            SlaIntent(Protocol.ANY, IpPattern.parse("10.0.0.0/8"), IpPattern(), Verdict.DROP),
        )
    )
    ten = int(IpPattern.parse("10.1.1.1/32").network)
    other = int(IpPattern.parse("11.0.0.1/32").network)
    assert sla.verdict(Protocol.TCP, ten, other) is Verdict.ALLOW
    assert sla.verdict(Protocol.UDP, ten, other) is Verdict.DROP
    assert sla.first_match(Protocol.UDP, other, ten) is None
    assert sla.verdict(Protocol.UDP, other, ten) is Verdict.ALLOW


def test_rule_file_roundtrip():
    tables = {
        "s1": [parse_rule("10 any * * * * * * * * drop controller")],
        "s2": [parse_rule("20 udp 1 * * * * * 53 * allow controller"), parse_rule("5 any * * * * * * * * fwd 2 controller")],
    }
    assert parse_rule_file(format_rule_file(tables)) == tables
    with pytest.raises(InvalidInputError):
        parse_rule_file("10 any * * * * * * * * drop controller\n")


def test_packet_rejects_any_protocol():
    with pytest.raises(InvalidInputError):
        Packet(Protocol.ANY, 0, 0, 0, 0)


def _table(rules):
    t = FlowTable()
    t.extend(rules)
    return t


def test_lookup_priority_then_insertion_order():
    a = parse_rule("10 any * * * * * * * * drop controller")
    b = parse_rule("20 any * * * * * * * * allow controller")
    c = parse_rule("20 any * * * * * * * * fwd 1 controller")
    pkt = Packet.make("tcp", "00:00:00:00:00:01", "00:00:00:00:00:02", "10.0.0.1", "10.0.0.2")
    assert _table([a, b, c]).lookup(pkt) == (1, b)
    assert _table([]).lookup(pkt) is None


def test_counters_are_per_rule():
    r = parse_rule("1 any * * * * * * * * allow controller")
    r.stats.record(100, 1.0)
    r.stats.record(50, 3.0)
    assert (r.stats.packets, r.stats.bytes, r.stats.duration) == (2, 150, 2.0)


# ---- compiled index vs linear scan ---------------------------------------

_IPS = [0x0A000001, 0x0A000002, 0x0A000101, 0x0B000001]


@st.composite
def rules_st(draw):
    plen = draw(st.sampled_from([0, 8, 16, 24, 32]))
    dst = IpPattern(draw(st.sampled_from(_IPS)) & IpPattern(0, plen).mask, plen)
    splen = draw(st.sampled_from([0, 8, 32]))
    src = IpPattern(draw(st.sampled_from(_IPS)) & IpPattern(0, splen).mask, splen)
    header = HeaderPattern(
        in_port=draw(st.sampled_from([None, 1, 2])),
        src_mac=draw(st.sampled_from([MacPattern(), MacPattern.exact(1), MacPattern.parse("*:00:00:02")])),
        dst_mac=draw(st.sampled_from([MacPattern(), MacPattern.exact(2)])),
        src_ip=src,
        dst_ip=dst,
        dst_port=draw(st.sampled_from([PortRange(), PortRange(80, 80), PortRange(0, 1000)])),
        vlan=draw(st.sampled_from([None, 0, 1])),
    )
    return FlowRule(draw(st.integers(0, 6)), draw(st.sampled_from(list(Protocol))), header, Action.drop())


packets_st = st.builds(
    Packet,
    st.sampled_from([Protocol.TCP, Protocol.UDP]),
    st.sampled_from([1, 2, 3]),
    st.sampled_from([1, 2]),
    st.sampled_from(_IPS),
    st.sampled_from(_IPS),
    st.just(1024),
    st.sampled_from([80, 443, 2000]),
    st.sampled_from([0, 1]),
    st.sampled_from([1, 2]),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(rules_st(), min_size=0, max_size=160), st.lists(packets_st, min_size=1, max_size=20))
def test_indexed_lookup_equals_scan(rules, packets):
    table = _table(rules)
    for pkt in packets:
        got = table.lookup(pkt)
        want = scan(rules, pkt)
        assert (got and got[0]) == (want and want[0])


@settings(max_examples=40, deadline=None)
@given(rules_st(), packets_st)
def test_scan_returns_matching_maximal_rule(rule, pkt):
    rules = [rule, parse_rule("0 any * * * * * * * * allow controller")]
    i, hit = scan(rules, pkt)
    assert hit.matches(pkt)
    assert all(not r.matches(pkt) or r.priority <= hit.priority for r in rules)


def test_table_mutation_invalidates_index():
    rng = random.Random(3)
    rules = [parse_rule(f"{rng.randint(1, 9)} any * * * * 10.0.{i}.0/24 * * * drop controller") for i in range(100)]
    table = _table(rules)
    pkt = Packet.make("udp", "00:00:00:00:00:01", "00:00:00:00:00:02", "10.0.0.1", "10.0.5.5")
    assert table.lookup(pkt)[0] == 5
    table.append(parse_rule("100 any * * * * * * * * allow controller"))
    assert table.lookup(pkt)[0] == 100
    table.clear()
    assert table.lookup(pkt) is None


@given(st.integers(0, (1 << 48) - 1))
def test_mac_text_roundtrip(mac):
    assert mac_to_int(int_to_mac(mac)) == mac
