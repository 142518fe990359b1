"""Small-world table for a synthetic clustered trace.

Writes the trace to CSV (so it can be fed to ``swgossip analyze-trace``) and
prints the per-window table.
"""

import argparse

from swgossip.trace import synthetic_clustered_trace, table1_text, windowed_reports, write_trace

DAY = 86400


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--groups", type=int, default=8)
    ap.add_argument("--users", type=int, default=12, help="users per group")
    ap.add_argument("--cross", type=float, default=0.02, help="probability of a cross-group access")
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trace-out", help="also save the trace as CSV")
    args = ap.parse_args()

    events = synthetic_clustered_trace(
        n_groups=args.groups, users_per_group=args.users, cross_group_prob=args.cross, seed=args.seed
    )
    if args.trace_out:
        with open(args.trace_out, "w", newline="") as fh:
            write_trace(events, fh)
    windows = [DAY, 2 * DAY, 7 * DAY, 14 * DAY, 30 * DAY]
    print(table1_text(windowed_reports(events, windows, args.samples, args.seed)), end="")


if __name__ == "__main__":
    main()
