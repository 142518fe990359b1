"""File-access traces and windowed file-sharing graphs.

Trace format: headerless CSV ``user_id,file_id,timestamp`` (integer UNIX
seconds), UTF-8, ``#`` comment lines ignored. The sharing graph for a window
links two users when both touched the same file inside that window.
"""

from __future__ import annotations

import csv
import io
import json
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, TextIO

from .graphlib import (
    GraphError,
    SmallWorldReport,
    UndefinedMetricError,
    UndirectedGraph,
    small_world_report,
)


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    user_id: str
    file_id: str
    timestamp: int


@dataclass(frozen=True)
class WindowSpec:
    start: int
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise TraceError(f"window length must be positive, got {self.length}")

    @property
    def end(self) -> int:
        return self.start + self.length

    def __contains__(self, ts: int) -> bool:
        return self.start <= ts < self.end


@dataclass
class ParsedTrace:
    events: list[TraceEvent] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def parse_trace(stream: TextIO | Iterable[str]) -> ParsedTrace:
    """Read events in input order; bad records are collected, not raised."""
    out = ParsedTrace()
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            out.errors.append((lineno, f"expected 3 fields, got {len(parts)}"))
            continue
        user, fid, ts = (p.strip() for p in parts)
        if not user or not fid:
            out.errors.append((lineno, "empty user or file id"))
            continue
        try:
            stamp = int(ts)
        except ValueError:
            out.errors.append((lineno, f"bad timestamp {ts!r}"))
            continue
        if stamp < 0:
            out.errors.append((lineno, f"negative timestamp {stamp}"))
            continue
        out.events.append(TraceEvent(user, fid, stamp))
    return out


def read_trace(path: str) -> ParsedTrace:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_trace(fh)


def write_trace(events: Iterable[TraceEvent], fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    for e in events:
        writer.writerow((e.user_id, e.file_id, e.timestamp))


def build_sharing_graph(events: Iterable[TraceEvent], window: WindowSpec) -> UndirectedGraph:
    users_by_file: dict[str, set[str]] = defaultdict(set)
    g = UndirectedGraph()
    for e in events:
        if e.timestamp in window:
            g.add_node(e.user_id)
            users_by_file[e.file_id].add(e.user_id)
    for users in users_by_file.values():
        for u, v in combinations(sorted(users), 2):
            g.add_edge(u, v)
    return g


_DURATION = re.compile(r"^\s*(\d+)\s*([dhs]?)\s*$")
_UNIT = {"d": 86400, "h": 3600, "s": 1, "": 1}


def parse_duration(text: str) -> int:
    """``"7d"`` -> 604800; suffixes d, h, s; bare numbers are seconds."""
    m = _DURATION.match(text)
    if not m or int(m.group(1)) == 0:
        raise TraceError(f"bad duration {text!r}")
    return int(m.group(1)) * _UNIT[m.group(2)]


def format_duration(seconds: int) -> str:
    for unit, size in (("d", 86400), ("h", 3600)):
        if seconds % size == 0:
            n = seconds // size
            return f"{n} day{'s' if n != 1 else ''}" if unit == "d" else f"{n}h"
    return f"{seconds}s"


@dataclass(frozen=True)
class WindowReport:
    window: WindowSpec
    report: SmallWorldReport | None
    status: str = "ok"  # "ok", "empty" (no events), "degenerate" (LCC < 2 nodes)

    def to_dict(self) -> dict:
        d = {
            "window_start": self.window.start,
            "window_length": self.window.length,
            "status": self.status,
        }
        if self.report is not None:
            d.update(self.report.to_dict())
        return d


def windowed_reports(
    events: list[TraceEvent],
    window_lengths: Iterable[int],
    samples: int = 10,
    seed: int = 0,
) -> list[WindowReport]:
    """Small-world reports over prefix windows anchored at the first event."""
    if not events:
        raise TraceError("no events")
    start = min(e.timestamp for e in events)
    out = []
    for length in sorted(window_lengths):
        window = WindowSpec(start, length)
        g = build_sharing_graph(events, window)
        if g.n_nodes() == 0:
            out.append(WindowReport(window, None, "empty"))
            continue
        try:
            rep = small_world_report(g, samples, seed)
        except (UndefinedMetricError, GraphError):
            out.append(WindowReport(window, None, "degenerate"))
            continue
        out.append(WindowReport(window, rep))
    return out


def reports_to_json(reports: list[WindowReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=False) + "\n"


def synthetic_clustered_trace(
    n_groups: int = 8,
    users_per_group: int = 12,
    files_per_group: int = 40,
    accesses_per_user: int = 6,
    cross_group_prob: float = 0.02,
    days: int = 30,
    seed: int = 0,
) -> list[TraceEvent]:
    """Trace where users mostly read files owned by their own group.

    Each access picks the user's group with probability ``1 - cross_group_prob``
    and a uniform other group otherwise, then a uniform file of that group.
    Timestamps are uniform over ``days``.
    """
    rng = random.Random(seed)
    events = []
    horizon = days * 86400
    for grp in range(n_groups):
        for u in range(users_per_group):
            user = f"g{grp}u{u}"
            for _ in range(accesses_per_user):
                target = grp
                if n_groups > 1 and rng.random() < cross_group_prob:
                    target = rng.choice([x for x in range(n_groups) if x != grp])
                fid = f"g{target}f{rng.randrange(files_per_group)}"
                events.append(TraceEvent(user, fid, rng.randrange(horizon)))
    events.sort(key=lambda e: e.timestamp)
    return events


def table1_text(reports: list[WindowReport]) -> str:
    """Fixed-width table, one row per window."""
    header = (
        "interval", "nodes", "links", "lcc_nodes", "lcc_links",
        "clustering", "path_len", "rand_clust", "rand_path",
    )
    rows = [header]
    for r in reports:
        label = format_duration(r.window.length)
        if r.report is None:
            rows.append((label, r.status, "", "", "", "", "", "", ""))
            continue
        o, b = r.report.observed, r.report.random_baseline
        rows.append((
            label,
            str(int(o.n_nodes)), str(int(o.n_links)),
            str(int(o.lcc_nodes)), str(int(o.lcc_links)),
            f"{o.clustering:.3f}", f"{o.avg_path_length:.2f}",
            f"{b.clustering:.3f}", f"{b.avg_path_length:.2f}",
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    buf = io.StringIO()
    for row in rows:
        buf.write("  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() + "\n")
    return buf.getvalue()
