"""trufl command-line entry point.

Machine-readable reports go to stdout as JSON lines (and to ``--out`` when
given); human summaries go to stderr.  Exit codes: 0 success, 1 violations
or verification failures found, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time
from typing import Callable, Iterable, Optional, Sequence

from trufl import __version__
from trufl.bench import FORMATS, bench_reachability, bench_topology, bench_trust_latency, emit_report, format_for_path
from trufl.errors import TruflError
from trufl.flowrules import check_sla, generate_rules
from trufl.pki import ARMOR_ANCHOR, ARMOR_CERT, SUPPORTED_STRENGTHS, armor, dearmor, make_provider, verify_chain
from trufl.rules import parse_rule_file, parse_sla
from trufl.topology import NetworkTopology, build_topology, motivating_example, rogue_tunnel_rule
from trufl.trust import ModeKind, TrustMode, TrustStore, attach_rogue_switch, provision, verify_trust

EXIT_OK = 0
EXIT_FOUND = 1
EXIT_USAGE = 2

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("TRUFL_SEED")
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"TRUFL_SEED must be an integer, got {raw!r}") from None


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def parse_count_range(text: str) -> list[int]:
    """``10000..50000:10000`` -> [10000, ..., 50000]; also accepts ``a,b,c``."""
    if ".." not in text:
        try:
            vals = [int(p) for p in text.split(",") if p.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad count list {text!r}") from None
    else:
        span, _, step = text.partition(":")
        lo, _, hi = span.partition("..")
        try:
            lo_i, hi_i, step_i = int(lo), int(hi), int(step or 1)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r} (expected lo..hi[:step])") from None
        if step_i < 1 or hi_i < lo_i:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        vals = list(range(lo_i, hi_i + 1, step_i))
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError(f"bad count list {text!r}")
    return vals


def _modes(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    valid = {k.value for k in ModeKind}
    bad = [n for n in names if n not in valid]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {sorted(valid)}, got {text!r}")
    return names


def _key_bits(text: str) -> int:
    v = _positive(text)
    if v not in SUPPORTED_STRENGTHS:
        raise argparse.ArgumentTypeError(f"key bits must be one of {SUPPORTED_STRENGTHS}")
    return v


class Emitter:
    """JSON lines to stdout, mirrored to an optional file."""

    def __init__(self, out_path: Optional[str] = None, stdout=None, stderr=None):
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr
        self.lines: list[str] = []
        self.out_path = out_path

    def emit(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=False)
        self.lines.append(line)
        print(line, file=self.stdout)

    def say(self, text: str) -> None:
        print(text, file=self.stderr)

    def close(self) -> None:
        if self.out_path:
            with open(self.out_path, "w", encoding="utf-8") as fh:
                fh.write("".join(l + "\n" for l in self.lines))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trufl", description="Trust management and flow-rule checking for modeled SDN networks.")
    p.add_argument("--version", action="version", version=f"trufl {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-topo", help="generate a topology file")
    g.add_argument("--hosts", type=_positive, default=16)
    g.add_argument("--hosts-per-switch", type=_positive, default=None, help="default: spread over 4 switches")
    g.add_argument("--domains", type=_positive, default=2)
    g.add_argument("--example", choices=["motivating"], default=None, help="emit a fixed example instead")
    g.add_argument("--rules", type=_non_negative, default=0, help="install N generated rules")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None, help="file to write (default stdout)")

    def trust_flags(sp):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--topology", default=None, help="topology file")
        src.add_argument("--hosts", type=_positive, default=None, help="generate a bench topology with N hosts")
        sp.add_argument("--mode", choices=[k.value for k in ModeKind], default="dist")
        sp.add_argument("--workers", type=_positive, default=None)
        sp.add_argument("--key-bits", type=_key_bits, default=2048)
        sp.add_argument("--provider", choices=["real", "test"], default="real")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    s = sub.add_parser("setup", help="provision keys and certificates")
    trust_flags(s)
    s.add_argument("--certs-out", default=None, help="write all certificates as armored blocks")

    v = sub.add_parser("verify", help="provision, then verify every link")
    trust_flags(v)
    v.add_argument("--rogue", type=_non_negative, default=0, help="attach N self-signed rogue switches first")

    c = sub.add_parser("check-sla", help="check flow rules against an SLA policy")
    c.add_argument("--topology", required=True)
    c.add_argument("--sla", required=True)
    c.add_argument("--rules", default=None, help="rule file replacing the topology's tables")
    c.add_argument("--out", default=None)

    d = sub.add_parser("demo", help="run the two-switch motivating example")
    d.add_argument("--with-rule4", action="store_true", help="also install the rogue layer-2 tunnel rule")
    d.add_argument("--out", default=None)

    bl = sub.add_parser("bench-latency", help="trust setup + verify latency vs host count")
    bl.add_argument("--hosts", type=_int_list, default=[4, 16, 64, 256])
    bl.add_argument("--modes", type=_modes, default=["none", "central", "dist"])
    bl.add_argument("--repeats", type=_positive, default=5)
    bl.add_argument("--workers", type=_positive, default=None)
    bl.add_argument("--key-bits", type=_key_bits, default=2048)
    bl.add_argument("--provider", choices=["real", "test"], default="real")
    bl.add_argument("--seed", type=int, default=None)
    bl.add_argument("--out", default=None)
    bl.add_argument("--format", choices=FORMATS, default=None, help="default: from --out suffix")

    br = sub.add_parser("bench-reach", help="reachability check latency vs rule count")
    br.add_argument("--rules", type=parse_count_range, default=parse_count_range("10000..50000:10000"))
    br.add_argument("--seed", type=int, default=None)
    br.add_argument("--repeats", type=_positive, default=5)
    br.add_argument("--out", default=None)
    br.add_argument("--format", choices=FORMATS, default=None, help="default: from --out suffix")

    ce = sub.add_parser("certs", help="load armored certificates and dump them as JSON lines")
    ce.add_argument("file")
    ce.add_argument("--check-chain", action="store_true",
                    help="verify the certificate blocks, leaf first, against the trust-anchor blocks")
    ce.add_argument("--now", type=int, default=0)
    ce.add_argument("--out", default=None)
    return p


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _topology_from(args) -> NetworkTopology:
    if args.topology:
        return NetworkTopology.loads(_read(args.topology))
    return bench_topology(args.hosts or 16)


def _mode(args) -> TrustMode:
    return TrustMode.parse(args.mode, args.workers)


def cmd_gen_topo(args, out: Emitter) -> int:
    if args.example == "motivating":
        topo, _ = motivating_example()
    else:
        per = args.hosts_per_switch or max(1, args.hosts // min(4, args.hosts))
        topo = build_topology(args.hosts, per, args.domains)
        if args.rules:
            generate_rules(topo, args.rules, seed=_seed(args))
    text = topo.dumps()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        out.emit({"event": "topology", **topo.summary(), "path": args.out})
    else:
        out.stdout.write(text)
    out.say(f"topology: {len(topo.hosts)} hosts, {len(topo.switches)} switches, {len(topo.domains)} domains")
    return EXIT_OK


def _provision(args, out: Emitter):
    topo = _topology_from(args)
    mode = _mode(args)
    provider = make_provider(args.provider, _seed(args))
    store, report = provision(topo, mode, provider=provider, key_bits=args.key_bits)
    return topo, mode, store, report


def cmd_setup(args, out: Emitter) -> int:
    topo, mode, store, report = _provision(args, out)
    out.emit(report.as_dict())
    if args.certs_out:
        with open(args.certs_out, "w", encoding="utf-8") as fh:
            fh.write(dump_store(store))
    out.say(f"setup [{mode}]: {report.certificates} certificates for {report.host_count} hosts in {report.wall_clock_setup:.2f} ms")
    return EXIT_OK


def dump_store(store: TrustStore) -> str:
    parts = [armor(a, ARMOR_ANCHOR) for a in store.anchors]
    for node in sorted(store.credentials):
        parts.append(armor(store.credentials[node].cert, ARMOR_CERT))
    return "".join(parts)


def cmd_verify(args, out: Emitter) -> int:
    topo, mode, store, report = _provision(args, out)
    rng = random.Random(_seed(args))
    rogues = []
    for _ in range(args.rogue):
        if mode.kind is ModeKind.NO_TRUST:
            raise UsageError("--rogue needs a trust mode other than none")
        rogues.append(attach_rogue_switch(topo, store, rng=rng))
    vr = verify_trust(topo, store, mode)
    report.wall_clock_verify = vr.wall_clock_verify
    out.emit(report.as_dict())
    out.emit(vr.as_dict())
    for check in vr.failures():
        out.emit({"event": "link-failure", **check.as_dict()})
    failed = sorted(vr.failed_nodes())
    out.say(
        f"verify [{mode}]: {len(vr.links) - len(vr.failures())}/{len(vr.links)} links passed"
        + (f"; untrusted: {', '.join(failed)}" if failed else "")
        + f" ({report.total:.2f} ms)"
    )
    return EXIT_FOUND if vr.failures() else EXIT_OK


def cmd_check_sla(args, out: Emitter) -> int:
    topo = NetworkTopology.loads(_read(args.topology))
    sla = parse_sla(_read(args.sla))
    if args.rules:
        tables = parse_rule_file(_read(args.rules))
        unknown = [s for s in tables if s not in topo.tables]
        if unknown:
            raise UsageError(f"rule file names unknown switches: {', '.join(unknown)}")
        for sw in topo.tables:
            topo.tables[sw].clear()
        for sw, rules in tables.items():
            for rule in rules:
                topo.install(sw, rule)
    return _report_violations(topo, sla, out)


def _report_violations(topo, sla, out: Emitter) -> int:
    t0 = time.perf_counter()
    violations = check_sla(topo, sla)
    ms = (time.perf_counter() - t0) * 1000.0
    for v in violations:
        out.emit(v.as_dict(topo))
    kinds: dict[str, int] = {}
    for v in violations:
        kinds[v.kind.value] = kinds.get(v.kind.value, 0) + 1
    detail = ", ".join(f"{n} {k}" for k, n in sorted(kinds.items())) or "none"
    out.say(f"check-sla: {len(violations)} violation(s) [{detail}] across {topo.rule_count()} rules in {ms:.2f} ms")
    return EXIT_FOUND if violations else EXIT_OK


def cmd_demo(args, out: Emitter) -> int:
    topo, sla = motivating_example()
    if args.with_rule4:
        topo.install("Switch1", rogue_tunnel_rule())
    return _report_violations(topo, sla, out)


def _write_table(table, args, out: Emitter) -> None:
    for line in emit_report(table, "jsonl").splitlines():
        out.emit(json.loads(line))
    if args.out:
        emit_report(table, args.format or format_for_path(args.out), args.out)
    elif args.format and args.format != "jsonl":
        out.stderr.write(emit_report(table, args.format))


def cmd_bench_latency(args, out: Emitter) -> int:
    modes = [TrustMode.parse(m, args.workers) for m in args.modes]
    for n in args.hosts:
        if n % min(4, n):
            raise UsageError(f"host count {n} must be a multiple of 4")
    provider = make_provider(args.provider, _seed(args))
    table = bench_trust_latency(
        args.hosts, modes, args.repeats, provider=provider, key_bits=args.key_bits,
        progress=lambda r: out.say(f"  {r.host_count:>4} hosts {r.mode:<7} {r.measured_ms:9.2f} ms"),
    )
    _write_table(table, args, out)
    return EXIT_OK


def cmd_bench_reach(args, out: Emitter) -> int:
    table = bench_reachability(
        args.rules, seed=_seed(args), repeats=args.repeats,
        progress=lambda r: out.say(f"  {r.rule_count:>6} rules {r.measured_ms:9.2f} ms ({r.violations} violations)"),
    )
    _write_table(table, args, out)
    return EXIT_OK


def cmd_certs(args, out: Emitter) -> int:
    blocks = dearmor(_read(args.file))
    for label, cert in blocks:
        out.emit({"event": "certificate", "label": label, **cert.as_dict()})
    if not args.check_chain:
        out.say(f"certs: {len(blocks)} block(s)")
        return EXIT_OK
    anchors = [c for label, c in blocks if label == ARMOR_ANCHOR]
    chain = [c for label, c in blocks if label == ARMOR_CERT]
    if not chain:
        raise UsageError("no certificate blocks to verify")
    verdict = verify_chain(chain, anchors, args.now)
    out.emit({"event": "chain", "ok": verdict.ok,
              "reason": None if verdict.reason is None else verdict.reason.value, "position": verdict.position})
    out.say(f"certs: chain of {len(chain)} {'verifies' if verdict.ok else 'fails: ' + verdict.reason.value}")
    return EXIT_OK if verdict.ok else EXIT_FOUND


COMMANDS: dict[str, Callable] = {
    "gen-topo": cmd_gen_topo,
    "setup": cmd_setup,
    "verify": cmd_verify,
    "check-sla": cmd_check_sla,
    "demo": cmd_demo,
    "bench-latency": cmd_bench_latency,
    "bench-reach": cmd_bench_reach,
    "certs": cmd_certs,
}


_OWN_OUT = {"gen-topo", "bench-latency", "bench-reach"}


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    parser = build_parser()
    stderr = stderr or sys.stderr
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    # gen-topo and the benchmarks write their own --out file
    mirror = None if args.command in _OWN_OUT else getattr(args, "out", None)
    out = Emitter(mirror, stdout, stderr)
    try:
        default_seed()
        code = COMMANDS[args.command](args, out)
        out.close()
        return code
    except (UsageError, TruflError) as e:
        print(f"trufl {args.command}: error: {e}", file=stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"trufl {args.command}: error: {e}", file=stderr)
        return EXIT_USAGE


def main(argv: Optional[Iterable[str]] = None) -> None:
    sys.exit(run(None if argv is None else list(argv)))


if __name__ == "__main__":
    main()
