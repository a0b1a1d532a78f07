"""Benchmark harness: trust setup/verify latency and reachability-check latency.

Both experiments run their scenarios sequentially and report the median of
``repeats`` timed runs after one discarded warm-up run.  Published reference
numbers ride along as extra columns; they are citations, never measurements.

Report formats (``emit_report``), all UTF-8 with ``\\n`` line endings:

* ``csv``      header row then one row per table row, columns in ``COLUMNS`` order
* ``markdown`` a pipe table with the same columns
* ``jsonl``    one JSON object per row, keys in column order

Measured milliseconds are always written with two decimals (``%.2f``).
Reference values are written with ``str()`` of the stored constant, so they
appear exactly as published (``1.106``, ``130-145``).  A missing value is an
empty CSV cell, ``-`` in markdown and ``null`` in JSON.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from trufl.errors import InvalidInputError
from trufl.flowrules import domain_isolation_sla, end_to_end_check, generate_rules
from trufl.pki import CryptoProvider
from trufl.topology import NetworkTopology, build_topology
from trufl.trust import ModeKind, TrustMode, median_ms, run_trust

# host count -> (no trust, centralized, distributed), milliseconds
FIG5_REFERENCE: dict[int, tuple[float, float, float]] = {
    4: (0.20, 0.59, 0.43),
    16: (1.53, 3.18, 1.74),
    64: (1.106, 10.84, 3.53),
    256: (5.41, 46.44, 15.45),
}

# rule count -> (TRUFL ms, NetSyn ms, SDPA range ms, Hassel ms)
TABLE1_REFERENCE: dict[int, tuple[int, int, tuple[int, int], int]] = {
    10000: (7, 25, (130, 140), 100),
    20000: (11, 34, (130, 145), 1100),
    30000: (14, 43, (130, 145), 3000),
    40000: (19, 57, (130, 145), 5000),
    50000: (28, 65, (130, 145), 6000),
}

_MODE_COLUMN = {ModeKind.NO_TRUST: 0, ModeKind.CENTRALIZED: 1, ModeKind.DISTRIBUTED: 2}

# the published latency setup: 4 switches in 2 security domains
BENCH_SWITCHES = 4
BENCH_DOMAINS = 2
REACH_HOSTS = 16


def fig5_reference(host_count: int, mode: Union[TrustMode, ModeKind]) -> Optional[float]:
    kind = mode.kind if isinstance(mode, TrustMode) else mode
    row = FIG5_REFERENCE.get(host_count)
    return None if row is None else row[_MODE_COLUMN[kind]]


def bench_topology(n_hosts: int) -> NetworkTopology:
    """Hosts spread evenly over 4 switches in 2 domains (fewer switches if n < 4)."""
    switches = min(BENCH_SWITCHES, n_hosts)
    if n_hosts % switches:
        raise InvalidInputError(f"host count {n_hosts} must be a multiple of {switches}")
    return build_topology(n_hosts, n_hosts // switches, min(BENCH_DOMAINS, switches))


@dataclass
class LatencyRow:
    host_count: int
    mode: str
    measured_ms: float
    paper_reference_ms: Optional[float]
    samples: list[float] = field(default_factory=list, compare=False)


@dataclass
class LatencyTable:
    rows: list[LatencyRow] = field(default_factory=list)

    COLUMNS = ("host_count", "mode", "measured_ms", "paper_reference_ms")

    def cells(self, row: LatencyRow) -> list[Optional[str]]:
        return [str(row.host_count), row.mode, _ms(row.measured_ms), _ref(row.paper_reference_ms)]

    def get(self, host_count: int, mode: str) -> LatencyRow:
        for r in self.rows:
            if r.host_count == host_count and r.mode == mode:
                return r
        raise KeyError((host_count, mode))


@dataclass
class ReachabilityRow:
    rule_count: int
    measured_ms: float
    violations: int
    paper_trufl_ms: Optional[int]
    paper_netsyn_ms: Optional[int]
    paper_sdpa_range: Optional[tuple[int, int]]
    paper_hassel_ms: Optional[int]
    samples: list[float] = field(default_factory=list, compare=False)


@dataclass
class ReachabilityTable:
    rows: list[ReachabilityRow] = field(default_factory=list)

    COLUMNS = (
        "rule_count",
        "measured_ms",
        "violations",
        "paper_trufl_ms",
        "paper_netsyn_ms",
        "paper_sdpa_range_ms",
        "paper_hassel_ms",
    )

    def cells(self, row: ReachabilityRow) -> list[Optional[str]]:
        sdpa = None if row.paper_sdpa_range is None else "%d-%d" % row.paper_sdpa_range
        return [
            str(row.rule_count),
            _ms(row.measured_ms),
            str(row.violations),
            _ref(row.paper_trufl_ms),
            _ref(row.paper_netsyn_ms),
            sdpa,
            _ref(row.paper_hassel_ms),
        ]

    def get(self, rule_count: int) -> ReachabilityRow:
        for r in self.rows:
            if r.rule_count == rule_count:
                return r
        raise KeyError(rule_count)


def _ms(v: float) -> str:
    return "%.2f" % v


def _ref(v) -> Optional[str]:
    return None if v is None else str(v)


def _timed_median(fn: Callable[[], float], repeats: int, warmup: bool) -> tuple[float, list[float]]:
    if warmup:
        fn()
    samples = [fn() for _ in range(repeats)]
    return median_ms(samples), samples


def bench_trust_latency(
    host_counts: Sequence[int],
    modes: Sequence[TrustMode],
    repeats: int = 5,
    *,
    warmup: bool = True,
    provider: Optional[CryptoProvider] = None,
    key_bits: int = 2048,
    topology_factory: Callable[[int], NetworkTopology] = bench_topology,
    progress: Optional[Callable[[LatencyRow], None]] = None,
) -> LatencyTable:
    """Median provision + verify_trust wall-clock for every (host count, mode)."""
    if not host_counts:
        raise InvalidInputError("host_counts must be nonempty")
    if not modes:
        raise InvalidInputError("modes must be nonempty")
    if repeats < 1:
        raise InvalidInputError(f"repeats must be >= 1, got {repeats}")
    table = LatencyTable()
    for n in host_counts:
        topo = topology_factory(n)
        for mode in modes:
            def once() -> float:
                _, report, _ = run_trust(topo, mode, provider=provider, key_bits=key_bits)
                return report.total

            med, samples = _timed_median(once, repeats, warmup)
            row = LatencyRow(n, str(mode), med, fig5_reference(n, mode), samples)
            table.rows.append(row)
            if progress:
                progress(row)
    return table


def bench_reachability(
    rule_counts: Sequence[int],
    seed: int = 42,
    repeats: int = 5,
    *,
    warmup: bool = True,
    n_hosts: int = REACH_HOSTS,
    progress: Optional[Callable[[ReachabilityRow], None]] = None,
) -> ReachabilityTable:
    """Median end_to_end_check latency against a domain-isolation SLA per rule count."""
    if not rule_counts:
        raise InvalidInputError("rule_counts must be nonempty")
    if any(c < 0 for c in rule_counts):
        raise InvalidInputError("rule counts must be non-negative")
    if repeats < 1:
        raise InvalidInputError(f"repeats must be >= 1, got {repeats}")
    table = ReachabilityTable()
    for count in rule_counts:
        topo = bench_topology(n_hosts)
        generate_rules(topo, count, seed=seed)
        sla = domain_isolation_sla(topo)
        last = []

        def once() -> float:
            res = end_to_end_check(topo, sla, count)
            last[:] = [res]
            return res.wall_clock_ms

        med, samples = _timed_median(once, repeats, warmup)
        ref = TABLE1_REFERENCE.get(count)
        row = ReachabilityRow(count, med, len(last[0].violations), *(ref or (None,) * 4), samples=samples)
        table.rows.append(row)
        if progress:
            progress(row)
    return table


Table = Union[LatencyTable, ReachabilityTable]
FORMATS = ("csv", "markdown", "jsonl")


def render_report(table: Table, fmt: str) -> str:
    if fmt not in FORMATS:
        raise InvalidInputError(f"unknown report format {fmt!r} (expected one of {', '.join(FORMATS)})")
    cols = table.COLUMNS
    rows = [table.cells(r) for r in table.rows]
    out = io.StringIO()
    if fmt == "csv":
        out.write(",".join(cols) + "\n")
        for cells in rows:
            out.write(",".join("" if c is None else c for c in cells) + "\n")
    elif fmt == "markdown":
        out.write("| " + " | ".join(cols) + " |\n")
        out.write("|" + "|".join("---" for _ in cols) + "|\n")
        for cells in rows:
            out.write("| " + " | ".join("-" if c is None else c for c in cells) + " |\n")
    else:
        for cells in rows:
            out.write(json.dumps(dict(zip(cols, _json_cells(cols, cells)))) + "\n")
    return out.getvalue()


def _json_cells(cols: Sequence[str], cells: list[Optional[str]]) -> list:
    # numeric cells become JSON numbers parsed from their rendered text
    return [
        c if c is None or col in ("mode", "paper_sdpa_range_ms") else json.loads(c)
        for col, c in zip(cols, cells)
    ]


def emit_report(table: Table, fmt: str, path: Union[str, Path, None] = None) -> str:
    """Render ``table``; write it to ``path`` when given.  Returns the text."""
    text = render_report(table, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def format_for_path(path: Union[str, Path], default: str = "csv") -> str:
    suffix = Path(path).suffix.lower()
    return {".csv": "csv", ".md": "markdown", ".jsonl": "jsonl", ".json": "jsonl"}.get(suffix, default)


def speedup(table: LatencyTable, host_count: int) -> float:
    """Centralized / Distributed median ratio at ``host_count``."""
    return table.get(host_count, "central").measured_ms / table.get(host_count, "dist").measured_ms
