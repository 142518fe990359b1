"""``swgossip`` command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every seed defaults to DEFAULT_SEED, never to wall-clock time.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .bloom import BloomParams, false_positive_rate, size_for
from .sim import ConfigError, SimError, Simulator, estimate_traffic, load_config
from .topology import OverlaySpec, TopologyError, WIRINGS, build_overlay
from .trace import parse_duration, read_trace, reports_to_json, table1_text, windowed_reports
from .workload import WorkloadError, curve_to_csv, figure2_curve

DEFAULT_SEED = 0
DEFAULT_WINDOWS = "1d,2d,7d,14d,30d"
DEFAULT_ALPHAS = "0.6,0.8,1.0,1.2"
DEFAULT_GRID = "0,0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.5,1"

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated number list: {text!r}") from None


def _open_out(path: str):
    return sys.stdout if path == "-" else open(path, "w", newline="")


# ---------------------------------------------------------------- analyze-trace


def cmd_analyze_trace(args) -> int:
    try:
        windows = [parse_duration(w) for w in args.windows.split(",") if w.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not windows or min(windows) <= 0:
        raise UsageError("--windows needs at least one positive duration")
    try:
        parsed = read_trace(args.trace)
    except OSError as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc.strerror or exc}") from None
    for lineno, msg in parsed.errors:
        print(f"warning: {args.trace}:{lineno}: {msg}", file=sys.stderr)
    reports = windowed_reports(parsed.events, windows, args.samples, args.seed) if parsed.events else []
    if args.json:
        Path(args.json).write_text(reports_to_json(reports))
    sys.stdout.write(table1_text(reports))
    if not parsed.events:
        print("(empty trace: no windows analysed)")
    return EXIT_OK


# ---------------------------------------------------------------- estimate


@dataclass(frozen=True)
class EstimateReport:
    files: int
    nodes: int
    target_fp: float
    m: int
    k: int
    bytes_per_entry: float
    filter_bytes: int
    analytic_fp: float
    lifetime_seconds: float
    fanout: float
    period_seconds: float
    traffic_bytes_per_second: float

    @property
    def filter_megabytes(self) -> float:
        return self.filter_bytes / 1e6


def estimate_report(
    files: int,
    nodes: int,
    target_fp: float,
    lifetime_days: float,
    fanout: float,
    period_secs: float,
    bytes_per_entry: float | None = None,
) -> EstimateReport:
    """Filter sizing plus the per-node traffic estimate.

    ``target_fp >= 1`` asks for no accuracy at all and gets the smallest
    filter (one byte, one hash). Traffic uses the sized filter's bytes per
    entry unless ``bytes_per_entry`` overrides it.
    """
    if target_fp >= 1:
        params = BloomParams(m=8, k=1, expected_n=files)
    else:
        params = size_for(files, target_fp)
    per_entry = params.n_bytes / files
    traffic = estimate_traffic(
        files, nodes, lifetime_days * 86400, bytes_per_entry or per_entry, fanout, period_secs
    )
    return EstimateReport(
        files=files,
        nodes=nodes,
        target_fp=target_fp,
        m=params.m,
        k=params.k,
        bytes_per_entry=per_entry,
        filter_bytes=params.n_bytes,
        analytic_fp=false_positive_rate(files, params.m, params.k),
        lifetime_seconds=lifetime_days * 86400,
        fanout=fanout,
        period_seconds=period_secs,
        traffic_bytes_per_second=traffic,
    )


def estimate_text(r: EstimateReport, traffic_entry_bytes: float | None = None) -> str:
    entry = traffic_entry_bytes or r.bytes_per_entry
    rows = [
        ("files per cluster", f"{r.files}"),
        ("nodes per cluster", f"{r.nodes}"),
        ("target false-positive rate", f"{r.target_fp:g}"),
        ("filter bits (m)", f"{r.m}"),
        ("hash functions (k)", f"{r.k}"),
        ("bytes per entry", f"{r.bytes_per_entry:.3f}"),
        ("filter memory per node", f"{r.filter_megabytes:.2f} MB (1 MB = 10^6 bytes)"),
        ("analytic false-positive rate", f"{r.analytic_fp:.3g}"),
        ("file lifetime", f"{r.lifetime_seconds / 86400:g} days (bounds staleness; not in the rate)"),
        ("traffic per node", f"{r.traffic_bytes_per_second / 1e3:.1f} KB/s ({r.traffic_bytes_per_second:.0f} B/s)"),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    lines.append(
        f"traffic model: each node pushes its own share ({r.files}/{r.nodes} entries "
        f"at {entry:.3f} B) to {r.fanout:g} peers every {r.period_seconds:g} s"
    )
    return "\n".join(lines) + "\n"


def cmd_estimate(args) -> int:
    for name in ("files", "nodes"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name} must be >= 1")
    for name, flag in (("lifetime_days", "--lifetime-days"), ("period_secs", "--period-secs")):
        if not getattr(args, name) > 0:
            raise UsageError(f"{flag} must be positive")
    if not args.fp > 0 or math.isnan(args.fp):
        raise UsageError("--fp must be positive")
    if args.fanout < 0:
        raise UsageError("--fanout must be >= 0")
    if args.bytes_per_entry is not None and not args.bytes_per_entry > 0:
        raise UsageError("--bytes-per-entry must be positive")
    if args.fp >= 1:
        print("warning: --fp >= 1 means no accuracy target; using the minimal filter", file=sys.stderr)
    r = estimate_report(
        args.files, args.nodes, args.fp, args.lifetime_days, args.fanout, args.period_secs,
        args.bytes_per_entry,
    )
    sys.stdout.write(estimate_text(r, args.bytes_per_entry))
    return EXIT_OK


# ---------------------------------------------------------------- workload-curve


def cmd_workload_curve(args) -> int:
    alphas = _floats(args.alpha)
    grid = _floats(args.coverage_grid)
    try:
        rows = figure2_curve(alphas, args.files, grid)
    except WorkloadError as exc:
        raise UsageError(str(exc)) from None
    text = curve_to_csv(rows)
    out = _open_out(args.out)
    try:
        out.write(text)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------- build-overlay


def cmd_build_overlay(args) -> int:
    try:
        spec = OverlaySpec(
            n_clusters=args.clusters,
            nodes_per_cluster=args.size,
            intra_degree=args.degree,
            wiring=args.wiring,
            wiring_param=args.param,
            seed=args.seed,
            gateways_per_cluster=args.gateways,
        )
    except TopologyError as exc:
        raise UsageError(str(exc)) from None
    overlay = build_overlay(spec)
    sidecar = args.clusters_out or f"{args.out}.clusters.csv"
    with open(args.out, "w") as edges, open(sidecar, "w", newline="") as clusters:
        overlay.write(edges, clusters)
    g = overlay.graph
    print(
        f"wrote {g.n_nodes()} nodes, {g.n_edges()} edges "
        f"({len(overlay.cross_edges())} inter-cluster) to {args.out}; clusters to {sidecar}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except ConfigError as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from None
    sim = Simulator(config)
    m = sim.run()
    Path(args.out).write_text(m.to_json())
    if args.per_round_csv:
        Path(args.per_round_csv).write_text(sim.per_round_csv())
    share = m.served_local / m.requests_total if m.requests_total else 0.0
    print(
        f"rounds={sim.round} requests={m.requests_total} served_local={share:.4f} "
        f"fp={m.false_positive_lookups} fn={m.false_negative_lookups} "
        f"unresolved_existing={m.unresolved_existing} clusters_visited_max={m.clusters_visited_max} "
        f"bytes/node/round={m.gossip_bytes_per_node_per_round:.1f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swgossip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    a = sub.add_parser("analyze-trace", help="small-world metrics of a file-sharing trace")
    a.add_argument("--trace", required=True, help="CSV lines 'user,file,timestamp' (seconds)")
    a.add_argument("--windows", default=DEFAULT_WINDOWS, help="comma list of durations (d/h/s suffix)")
    a.add_argument("--samples", type=int, default=10, help="random baselines per window")
    a.add_argument("--seed", type=int, default=DEFAULT_SEED)
    a.add_argument("--json", help="also write the per-window reports as JSON here")
    a.set_defaults(func=cmd_analyze_trace)

    e = sub.add_parser("estimate", help="filter memory and gossip traffic per node")
    e.add_argument("--files", type=int, default=10_000_000)
    e.add_argument("--nodes", type=int, default=1000)
    e.add_argument("--fp", type=float, default=0.001)
    e.add_argument("--lifetime-days", type=float, default=10.0)
    e.add_argument("--fanout", type=float, default=1.2)
    e.add_argument("--period-secs", type=float, default=1.0)
    e.add_argument("--bytes-per-entry", type=float, help="override the sized filter's bytes per entry")
    e.set_defaults(func=cmd_estimate)

    w = sub.add_parser("workload-curve", help="locally served fraction under Zipf requests (CSV)")
    w.add_argument("--alpha", default=DEFAULT_ALPHAS, help="comma list of Zipf exponents")
    w.add_argument("--files", type=int, default=1_000_000)
    w.add_argument("--coverage-grid", default=DEFAULT_GRID, help="comma list of coverages in [0, 1]")
    w.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    w.set_defaults(func=cmd_workload_curve)

    b = sub.add_parser("build-overlay", help="clustered overlay as an edge list plus cluster CSV")
    b.add_argument("--clusters", type=int, required=True)
    b.add_argument("--size", type=int, required=True, help="nodes per cluster")
    b.add_argument("--degree", type=int, required=True, help="intra-cluster degree")
    b.add_argument("--wiring", choices=WIRINGS, default="random")
    b.add_argument("--param", type=float, default=1.0,
                   help="random: links per cluster; gateway: links per gateway; rewire: probability")
    b.add_argument("--gateways", type=int, default=1, help="gateways per cluster (gateway wiring)")
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.add_argument("--out", required=True)
    b.add_argument("--clusters-out", help="cluster CSV path (default: OUT.clusters.csv)")
    b.set_defaults(func=cmd_build_overlay)

    s = sub.add_parser("simulate", help="run the gossip simulator from an INI config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="metrics JSON path")
    s.add_argument("--per-round-csv", help="also write round,served_local,fp,fn,bytes rows here")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"swgossip {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SimError, TopologyError, WorkloadError, ValueError) as exc:
        print(f"swgossip {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
