"""Per-node gossip state: membership view, epoch-tagged filters, soft-state expiry.

A node keeps one Bloom filter slot per ``(contributor, epoch)`` pair it has
heard about. Slots live as rows of a 2-D byte array so that a whole payload
can be merged with a few vectorised operations. The aggregate filter used to
answer requests is the OR of all live slots.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from ..bloom import BloomFilter, BloomParams
from . import wire

NEVER = np.iinfo(np.int64).min // 2

Key = tuple[int, int]


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class GossipConfig:
    fanout: int = 3
    gossip_period: int = 1
    node_ttl: int = 20
    file_ttl: int = 50
    full_refresh_period: int = 10
    # emissions that carry a freshly learnt record before it is retired
    rumor_emissions: int = 2

    def __post_init__(self) -> None:
        if self.fanout < 1:
            raise SimError("fanout must be >= 1")
        if self.gossip_period < 1 or self.full_refresh_period < 1:
            raise SimError("gossip_period and full_refresh_period must be >= 1")
        if self.node_ttl < 1:
            raise SimError("node_ttl must be >= 1")
        if self.file_ttl <= self.full_refresh_period:
            raise SimError("file_ttl must exceed full_refresh_period")
        if self.rumor_emissions < 1:
            raise SimError("rumor_emissions must be >= 1")


class ClusterView:
    """Fixed member list of one cluster with id -> position lookup."""

    def __init__(self, cluster_id: int, members: Sequence[int]) -> None:
        self.cluster_id = cluster_id
        self.members = np.array(sorted(members), dtype=np.int64)
        top = int(self.members.max()) + 1 if len(self.members) else 0
        self._pos = np.full(top, -1, dtype=np.int64)
        self._pos[self.members] = np.arange(len(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    def position(self, node_id: int) -> int:
        return int(self._pos[node_id]) if 0 <= node_id < len(self._pos) else -1

    def positions(self, ids: np.ndarray) -> np.ndarray:
        ids = ids.astype(np.int64)
        inside = (ids >= 0) & (ids < len(self._pos))
        out = np.full(len(ids), -1, dtype=np.int64)
        out[inside] = self._pos[ids[inside]]
        return out


@numba.njit(cache=True)
def _merge(
    store, contrib, epoch, count, pending, agg, heard, pos_map, me, my_id, rnd,
    node_ttl, file_ttl, rumor, sender, m_peer, m_heard, r_contrib, r_epoch, r_count, r_bits,
):
    """Fold one scanned payload into the node arrays.

    Returns 1 if any slot gained bits, 0 if not, and -1 (nothing touched)
    when there are not enough free rows for the records' new keys.
    """
    cap = contrib.shape[0]
    n_rec = r_contrib.shape[0]
    rows = np.full(n_rec, -1, np.int64)
    need = 0
    for i in range(n_rec):
        c = np.int64(r_contrib[i])
        e = np.int64(r_epoch[i])
        if c == my_id or c < 0 or e < 0 or rnd - e >= file_ttl:
            rows[i] = -2
            continue
        for j in range(cap):
            if contrib[j] == c and epoch[j] == e:
                rows[i] = j
                break
        if rows[i] == -1:
            need += 1
    free = 0
    for j in range(cap):
        if contrib[j] < 0:
            free += 1
    if need > free:
        return -1

    n_pos = pos_map.shape[0]
    if 0 <= sender < n_pos:
        p = pos_map[sender]
        if p >= 0 and p != me:
            heard[p] = rnd
    for i in range(m_peer.shape[0]):
        peer = np.int64(m_peer[i])
        h = np.int64(m_heard[i])
        if peer < 0 or peer >= n_pos or h > rnd or rnd - h >= node_ttl:
            continue
        p = pos_map[peer]
        if p >= 0 and p != me and h > heard[p]:
            heard[p] = h

    learned = 0
    nb = store.shape[1]
    for i in range(n_rec):
        j = rows[i]
        if j == -2:
            continue
        if j == -1:
            c = np.int64(r_contrib[i])
            e = np.int64(r_epoch[i])
            # an earlier record of this payload may have opened the slot
            for jj in range(cap):
                if contrib[jj] == c and epoch[jj] == e:
                    j = jj
                    break
            if j == -1:
                for jj in range(cap):
                    if contrib[jj] < 0:
                        j = jj
                        break
                contrib[j] = c
                epoch[j] = e
                count[j] = 0
                pending[j] = 0
                store[j, :] = 0
        changed = False
        for b in range(nb):
            old = store[j, b]
            new = old | r_bits[i, b]
            if new != old:
                store[j, b] = new
                agg[b] |= new
                changed = True
        if changed:
            pending[j] = rumor
            rc = np.int64(r_count[i])
            if rc > count[j]:
                count[j] = rc
            learned = 1
    return learned


class NodeState:
    """One node's view of its cluster.

    Slot ``j`` holds the filter for key ``(contrib[j], epoch[j])``; a
    negative contributor marks a free row. ``pending[j]`` is the number of
    emissions the slot still rides along in (0 = not in the outbox).
    """

    def __init__(
        self,
        node_id: int,
        cluster: ClusterView,
        params: BloomParams,
        local_files: Iterable[bytes] = (),
        external_links: Iterable[int] = (),
    ) -> None:
        self.node_id = node_id
        self.cluster = cluster
        self.cluster_id = cluster.cluster_id
        self.params = params
        self.me = cluster.position(node_id)
        if self.me < 0:
            raise SimError(f"node {node_id} is not a member of cluster {cluster.cluster_id}")
        self.local_files: dict[bytes, int] = {f: -1 for f in local_files}
        self.external_links = set(external_links)
        self.online = True
        self.own_epoch = -1
        self.heard = np.full(cluster.size, NEVER, dtype=np.int64)
        # a contributor holds at most a handful of unexpired epochs at once
        cap = max(8, 8 * cluster.size)
        self.store = np.zeros((cap, params.n_bytes), dtype=np.uint8)
        self.contrib = np.full(cap, -1, dtype=np.int64)
        self.epoch = np.zeros(cap, dtype=np.int64)
        self.count = np.zeros(cap, dtype=np.int64)
        self.pending = np.zeros(cap, dtype=np.int64)
        self.aggregate = BloomFilter(params)

    def grow(self) -> None:
        cap = len(self.contrib)
        self.store = np.vstack([self.store, np.zeros_like(self.store)])
        self.contrib = np.concatenate([self.contrib, np.full(cap, -1, dtype=np.int64)])
        for name in ("epoch", "count", "pending"):
            setattr(self, name, np.concatenate([getattr(self, name), np.zeros(cap, dtype=np.int64)]))

    def find(self, key: Key) -> int:
        hit = np.flatnonzero((self.contrib == key[0]) & (self.epoch == key[1]))
        return int(hit[0]) if len(hit) else -1

    def slot(self, key: Key) -> int:
        """Row for ``key``, opening an empty slot when new."""
        row = self.find(key)
        if row < 0:
            free = np.flatnonzero(self.contrib < 0)
            if not len(free):
                self.grow()
                free = np.flatnonzero(self.contrib < 0)
            row = int(free[0])
            self.contrib[row], self.epoch[row] = key
            self.store[row] = 0
            self.count[row] = 0
            self.pending[row] = 0
        return row

    def _live_rows(self) -> np.ndarray:
        rows = np.flatnonzero(self.contrib >= 0)
        return rows[np.lexsort((self.epoch[rows], self.contrib[rows]))]

    # -- views ----------------------------------------------------------

    @property
    def slot_of(self) -> dict[Key, int]:
        return {(int(self.contrib[r]), int(self.epoch[r])): int(r) for r in self._live_rows()}

    @property
    def outbox(self) -> dict[Key, int]:
        """Keys still queued for gossip, mapped to their remaining emissions."""
        return {
            (int(self.contrib[r]), int(self.epoch[r])): int(self.pending[r])
            for r in self._live_rows()
            if self.pending[r] > 0
        }

    @property
    def epochs(self) -> dict[Key, BloomFilter]:
        """Copies of the live per-contributor epoch filters."""
        out = {}
        for key, row in self.slot_of.items():
            bf = BloomFilter(self.params)
            bf.union_bits(self.store[row])
            bf.inserted_count = int(self.count[row])
            out[key] = bf
        return out

    @property
    def membership(self) -> dict[int, int]:
        """Known peers (self excluded) mapped to their last-heard round."""
        known = self.heard > NEVER
        known[self.me] = False
        return {int(p): int(t) for p, t in zip(self.cluster.members[known], self.heard[known])}

    def known_peers(self) -> list[int]:
        known = self.heard > NEVER
        known[self.me] = False
        return self.cluster.members[known].tolist()

    def add_peer(self, peer: int, rnd: int) -> None:
        pos = self.cluster.position(peer)
        if pos < 0:
            raise SimError(f"{peer} is not in cluster {self.cluster_id}")
        if pos != self.me:
            self.heard[pos] = max(self.heard[pos], rnd)

    def knows(self, file_key: bytes, positions: Sequence[int] | None = None) -> bool:
        if positions is None:
            return file_key in self.aggregate
        return self.aggregate.contains_positions(positions)

    def rebuild_aggregate(self) -> None:
        rows = np.flatnonzero(self.contrib >= 0)
        agg = BloomFilter(self.params)
        if len(rows):
            agg.union_bits(np.bitwise_or.reduce(self.store[rows], axis=0))
            agg.inserted_count = int(self.count[rows].sum())
        self.aggregate = agg

    def reset(self) -> None:
        """Forget membership and everything learnt from others."""
        self.heard[:] = NEVER
        self.contrib[:] = -1
        self.pending[:] = 0
        self.aggregate = BloomFilter(self.params)
        self.own_epoch = -1


def start_epoch(node: NodeState, rnd: int, rumor_emissions: int) -> None:
    """Re-advertise every local file under a fresh epoch tagged ``rnd``.

    The node's older epochs are retired; the new one is queued for gossip.
    """
    own = BloomFilter(node.params)
    own.update(sorted(node.local_files))
    mine = node.contrib == node.node_id
    node.contrib[mine] = -1
    node.pending[mine] = 0
    row = node.slot((node.node_id, rnd))
    node.store[row] = own.bits
    node.count[row] = own.inserted_count
    node.pending[row] = rumor_emissions
    node.own_epoch = rnd
    node.aggregate.union_update(own)
    for fid in node.local_files:
        node.local_files[fid] = rnd


def gossip_round(node: NodeState, rng: random.Random, fanout: int, rnd: int) -> list[tuple[int, bytes]]:
    """Choose up to ``fanout`` distinct known peers and build their payload.

    The payload holds the membership digest (self included, stamped ``rnd``)
    and every outbox record, i.e. each ``(contributor, epoch)`` filter that
    gained bits since it was last pushed. A record leaves the outbox after
    ``rumor_emissions`` pushes. With an empty outbox the payload carries
    membership only.
    """
    peers = node.known_peers()
    if not peers:
        return []
    targets = rng.sample(peers, min(fanout, len(peers)))
    node.heard[node.me] = rnd
    known = node.heard > NEVER
    rows = np.flatnonzero(node.pending > 0)
    rows = rows[np.lexsort((node.epoch[rows], node.contrib[rows]))]
    payload = wire.encode(
        node.node_id,
        rnd,
        node.cluster.members[known],
        node.heard[known],
        node.contrib[rows],
        node.epoch[rows],
        node.count[rows],
        node.store[rows],
        node.params,
    )
    node.pending[rows] -= 1
    return [(t, payload) for t in targets]


def merge_scanned(node: NodeState, scanned: tuple, rnd: int, cfg: GossipConfig) -> bool:
    """:func:`gossip_receive` for a payload already validated by ``wire.scan``."""
    sender, _, members, records = scanned
    agg = node.aggregate._bits
    while True:
        status = _merge(
            node.store, node.contrib, node.epoch, node.count, node.pending, agg,
            node.heard, node.cluster._pos, node.me, node.node_id, rnd,
            cfg.node_ttl, cfg.file_ttl, cfg.rumor_emissions, sender,
            members["peer"], members["heard"],
            records["contributor"], records["epoch"], records["count"], records["bits"],
        )
        if status >= 0:
            return bool(status)
        node.grow()


def gossip_receive(node: NodeState, payload: bytes, rnd: int, cfg: GossipConfig) -> bool:
    """Merge ``payload`` into ``node``; True when it carried bits the node lacked.

    Membership entries keep the freshest last-heard round, the sender counts
    as heard now, and each filter record is OR-ed into its
    ``(contributor, epoch)`` slot. Records that set new bits are queued for
    further pushes. Own and expired records are ignored. Raises
    wire.PayloadError for malformed input, leaving the node untouched.
    """
    return merge_scanned(node, wire.scan(payload, node.params), rnd, cfg)


@numba.njit(cache=True)
def _expire(store, contrib, epoch, pending, count, agg, heard, me, dropped, my_id, rnd, node_ttl, file_ttl):
    """Apply both timeouts in place.

    Silent peers get ``heard = NEVER``; stale rows are freed with their old
    contributor written to ``dropped`` (-1 elsewhere) and ``agg`` is rebuilt.
    Returns (peers dropped, aggregate inserted count or -1 if not rebuilt).
    """
    n_gone = 0
    for p in range(heard.shape[0]):
        if p != me and heard[p] > NEVER and rnd - heard[p] >= node_ttl:
            heard[p] = NEVER
            n_gone += 1
    n = 0
    for j in range(contrib.shape[0]):
        c = contrib[j]
        dropped[j] = -1
        if c >= 0 and c != my_id and rnd - epoch[j] >= file_ttl:
            dropped[j] = c
            contrib[j] = -1
            pending[j] = 0
            n += 1
    if n == 0:
        return n_gone, -1
    agg[:] = 0
    total = 0
    for j in range(contrib.shape[0]):
        if contrib[j] >= 0:
            total += count[j]
            for b in range(agg.shape[0]):
                agg[b] |= store[j, b]
    return n_gone, total


def expiry_sweep(node: NodeState, rnd: int, cfg: GossipConfig) -> tuple[list[int], list[Key]]:
    """Forget peers silent for ``node_ttl`` rounds and epochs older than ``file_ttl``.

    Bloom filters cannot delete, so when any epoch is dropped the aggregate is
    rebuilt from the surviving slots. The node's own epoch never expires.
    Returns the dropped peers and the dropped ``(contributor, epoch)`` keys.
    """
    before = node.heard.copy()
    dropped = np.empty(len(node.contrib), dtype=np.int64)
    n_gone, total = _expire(
        node.store, node.contrib, node.epoch, node.pending, node.count, node.aggregate._bits,
        node.heard, node.me, dropped, node.node_id, rnd, cfg.node_ttl, cfg.file_ttl,
    )
    gone = node.cluster.members[(node.heard != before)].tolist() if n_gone else []
    if total < 0:
        return gone, []
    node.aggregate.inserted_count = int(total)
    rows = dropped >= 0
    return gone, sorted(zip(dropped[rows].tolist(), node.epoch[rows].tolist()))
