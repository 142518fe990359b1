"""Closed-form gossip traffic estimate."""

from __future__ import annotations

from .node import SimError


def estimate_traffic(
    files_per_cluster: float,
    nodes_per_cluster: float,
    file_lifetime_seconds: float,
    bytes_per_entry: float,
    fanout: float,
    gossip_period_seconds: float,
) -> float:
    """Bytes per second sent by one node to keep its cluster's filters fresh.

    Each node owns ``files_per_cluster / nodes_per_cluster`` entries and
    pushes that share, at ``bytes_per_entry``, to ``fanout`` peers every
    gossip period::

        own_share_bytes * fanout / gossip_period_seconds

    ``file_lifetime_seconds`` only bounds how long a file stays advertised;
    with the share re-sent every period it drops out of the rate.
    """
    for name, value in (
        ("files_per_cluster", files_per_cluster),
        ("nodes_per_cluster", nodes_per_cluster),
        ("file_lifetime_seconds", file_lifetime_seconds),
        ("bytes_per_entry", bytes_per_entry),
        ("gossip_period_seconds", gossip_period_seconds),
    ):
        if value <= 0:
            raise SimError(f"{name} must be positive")
    if fanout < 0:
        raise SimError("fanout must be >= 0")
    own_share_bytes = files_per_cluster / nodes_per_cluster * bytes_per_entry
    return own_share_bytes * fanout / gossip_period_seconds
