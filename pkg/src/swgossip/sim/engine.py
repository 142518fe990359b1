"""Round-based simulator of gossiped Bloom-filter file location.

Every round runs five phases in a fixed order::

    advertise -> gossip -> expiry -> requests -> churn

Within a cluster nodes push what they know to ``fanout`` random members of
their membership view (see :mod:`.node`). Requests are answered from the
aggregate filter of the requester's cluster and otherwise forwarded across
inter-cluster links by one of three strategies.
"""

from __future__ import annotations

import io
import json
import random
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from ..bloom import BloomParams, indices, optimal_k
from ..topology import Overlay, OverlaySpec, build_overlay
from ..workload import ZipfWorkload, covered_files
from . import wire
from .node import ClusterView, GossipConfig, NodeState, SimError, expiry_sweep, gossip_round, merge_scanned, start_epoch
from .wire import PayloadError

STRATEGIES = ("unicast_random", "gateway_multicast", "flood")


@dataclass(frozen=True)
class ChurnConfig:
    join_probability: float = 0.0
    leave_probability: float = 0.0

    def __post_init__(self) -> None:
        for p in (self.join_probability, self.leave_probability):
            if not 0.0 <= p <= 1.0:
                raise SimError("churn probabilities must be in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    overlay: OverlaySpec
    gossip: GossipConfig = field(default_factory=GossipConfig)
    workload: ZipfWorkload = field(default_factory=lambda: ZipfWorkload(1.0, 10_000))
    # share of each cluster's catalog (its most popular files) held in the cluster
    coverage: float = 0.05
    # None sizes the filter at 16 bits per cluster file
    bloom: BloomParams | None = None
    repeat_probability: float = 0.2
    request_probability: float = 1.0
    churn: ChurnConfig = field(default_factory=ChurnConfig)
    forward_strategy: str = "flood"
    rounds: int = 200
    warmup_rounds: int = 20
    seed: int = 0
    record_events: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise SimError("rounds must be >= 1")
        if self.warmup_rounds < 0:
            raise SimError("warmup_rounds must be >= 0")
        if self.forward_strategy not in STRATEGIES:
            raise SimError(f"forward_strategy must be one of {STRATEGIES}")
        for name in ("coverage", "repeat_probability", "request_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimError(f"{name} must be in [0, 1]")

    def files_per_cluster(self) -> int:
        return covered_files(self.workload.n_files, self.coverage)

    def bloom_params(self) -> BloomParams:
        if self.bloom is not None:
            return self.bloom
        n = max(1, self.files_per_cluster())
        m = 16 * n
        return BloomParams(m=m, k=optimal_k(m, n), expected_n=n)


@dataclass
class Event:
    round: int
    kind: str  # gossip_emit, gossip_receive, request, join, leave, expiry, advertise
    payload: dict


@dataclass(frozen=True)
class Resolution:
    requester: int
    origin_cluster: int
    file: bytes
    outcome: str  # local, remote, not_found, unresolved
    hops: int  # remote clusters visited
    found_cluster: int | None

    @property
    def clusters_visited(self) -> int:
        return self.hops + 1


@dataclass
class SimMetrics:
    requests_total: int = 0
    served_local: int = 0
    served_remote: int = 0
    not_found: int = 0
    unresolved: int = 0
    unresolved_existing: int = 0
    hops_histogram: dict[int, int] = field(default_factory=dict)
    lookups: int = 0
    negative_lookups: int = 0
    false_positive_lookups: int = 0
    false_negative_lookups: int = 0
    local_false_negatives: int = 0
    malformed_payloads: int = 0
    messages: int = 0
    gossip_bytes: int = 0
    gossip_bytes_per_node_per_round: float = 0.0
    clusters_visited_max: int = 0
    joins: int = 0
    leaves: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hops_histogram"] = {str(k): v for k, v in sorted(self.hops_histogram.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _substream(seed: int, stream: int) -> random.Random:
    state = np.random.SeedSequence([seed, stream]).generate_state(2, dtype=np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))


class Simulator:
    """Holds the overlay, per-node state and ground truth for one run."""

    def __init__(self, config: SimConfig, overlay: Overlay | None = None) -> None:
        self.config = config
        self.cfg = config.gossip
        self.overlay = overlay if overlay is not None else build_overlay(config.overlay)
        self.params = config.bloom_params()
        self.metrics = SimMetrics()
        self.events: list[Event] = []
        self.per_round: list[tuple[int, int, int, int, int]] = []
        self.round = 0

        self._rng_gossip = _substream(config.seed, 1)
        self._rng_requests = _substream(config.seed, 2)
        self._rng_churn = _substream(config.seed, 3)
        self._rng_boot = _substream(config.seed, 4)
        catalog_rng = np.random.default_rng([config.seed, 5])

        ov = self.overlay
        self.clusters = ov.clusters()
        self.members = {c: ov.members(c) for c in self.clusters}
        self.views = {c: ClusterView(c, self.members[c]) for c in self.clusters}
        self.nodes: dict[int, NodeState] = {}
        for v in sorted(ov.cluster_of):
            self.nodes[v] = NodeState(
                v, self.views[ov.cluster_of[v]], self.params, external_links=ov.external_links(v)
            )
        # cross links grouped by source cluster, in sorted order
        self.cross_links: dict[int, list[tuple[int, int]]] = {c: [] for c in self.clusters}
        for u, v in ov.cross_edges():
            self.cross_links[ov.cluster_of[u]].append((u, v))
            self.cross_links[ov.cluster_of[v]].append((v, u))
        for c in self.clusters:
            self.cross_links[c].sort()

        wl = config.workload
        self.n_files = wl.n_files
        self.file_keys = [f"f{i}".encode() for i in range(wl.n_files)]
        held = config.files_per_cluster()
        self.catalog: dict[int, np.ndarray] = {}
        self.holders: dict[bytes, list[int]] = {}
        for c in self.clusters:
            perm = catalog_rng.permutation(wl.n_files)
            self.catalog[c] = perm
            members = self.members[c]
            owners = catalog_rng.integers(len(members), size=held)
            for idx, owner in zip(perm[:held], owners):
                key = self.file_keys[idx]
                node = members[owner]
                self.nodes[node].local_files[key] = 0
                self.holders.setdefault(key, []).append(node)

        for node in self.nodes.values():
            self._bootstrap(node, 0, config.overlay.intra_degree)
        self._needs_epoch = set(self.nodes)
        self._last_request: dict[int, bytes] = {}
        self._positions: dict[bytes, list[int]] = {}

    # -- helpers -------------------------------------------------------

    def _log(self, kind: str, **payload) -> None:
        if self.config.record_events:
            self.events.append(Event(self.round, kind, payload))

    def _bootstrap(self, node: NodeState, rnd: int, count: int) -> None:
        peers = [p for p in self.members[node.cluster_id] if p != node.node_id and self.nodes[p].online]
        for p in self._rng_boot.sample(peers, min(count, len(peers))):
            node.add_peer(p, rnd)

    def present_in(self, cluster: int, key: bytes) -> bool:
        return any(
            self.nodes[h].online and self.nodes[h].cluster_id == cluster
            for h in self.holders.get(key, ())
        )

    def exists(self, key: bytes) -> bool:
        return any(self.nodes[h].online for h in self.holders.get(key, ()))

    def probe_false_positives(self) -> tuple[int, int]:
        """Probe each cluster's filter with every catalog file absent from it.

        The lowest-id online member stands in for its cluster (after mixing all
        members hold the same bits). Returns ``(false positives, probes)``.
        Unlike the per-request counters, every absent file counts once, so
        popular files do not weigh more than rare ones.
        """
        fp = probes = 0
        for c in self.clusters:
            online = [v for v in self.members[c] if self.nodes[v].online]
            if not online:
                continue
            absent = [k for k in self.file_keys if not self.present_in(c, k)]
            if absent:
                fp += int(self.nodes[online[0]].aggregate.contains_many(absent).sum())
                probes += len(absent)
        return fp, probes

    def _lookup(self, node: NodeState, key: bytes) -> bool:
        """Consult ``node``'s filter, score it against ground truth, return success."""
        m = self.metrics
        pos = self._positions.get(key)
        if pos is None:
            pos = self._positions[key] = indices(key, self.params)
        says = node.knows(key, pos)
        truth = self.present_in(node.cluster_id, key)
        m.lookups += 1
        if not truth:
            m.negative_lookups += 1
            if says:
                m.false_positive_lookups += 1
        elif not says:
            m.false_negative_lookups += 1
        return says and truth

    def _links_from(self, cluster: int) -> list[tuple[int, int]]:
        nodes = self.nodes
        return [(u, v) for u, v in self.cross_links[cluster] if nodes[u].online and nodes[v].online]

    # -- requests ------------------------------------------------------

    def handle_request(self, requester: int, key: bytes, strategy: str | None = None) -> Resolution:
        strategy = strategy or self.config.forward_strategy
        if strategy not in STRATEGIES:
            raise SimError(f"unknown strategy {strategy!r}")
        node = self.nodes[requester]
        origin = node.cluster_id
        had_local = self.present_in(origin, key)
        if self._lookup(node, key):
            return Resolution(requester, origin, key, "local", 0, origin)
        if had_local:
            self.metrics.local_false_negatives += 1
        rng = self._rng_requests
        visited = {origin}
        hops = 0

        def visit(entry: int) -> bool:
            nonlocal hops
            visited.add(self.nodes[entry].cluster_id)
            hops += 1
            return self._lookup(self.nodes[entry], key)

        if strategy == "unicast_random":
            stack = [origin]
            while stack:
                here = stack[-1]
                options = [
                    (u, v) for u, v in self._links_from(here)
                    if self.nodes[v].cluster_id not in visited
                ]
                if not options:
                    stack.pop()
                    continue
                _, entry = options[rng.randrange(len(options))]
                if visit(entry):
                    return Resolution(requester, origin, key, "remote", hops, self.nodes[entry].cluster_id)
                stack.append(self.nodes[entry].cluster_id)
            return Resolution(requester, origin, key, "not_found", hops, None)

        if strategy == "gateway_multicast":
            found = None
            entries: dict[int, list[int]] = {}
            for _, v in self._links_from(origin):
                entries.setdefault(self.nodes[v].cluster_id, []).append(v)
            for c in sorted(entries):
                hops += 1
                visited.add(c)
                hit = False
                for v in entries[c]:
                    hit = self._lookup(self.nodes[v], key) or hit
                if hit and found is None:
                    found = c
            if found is not None:
                return Resolution(requester, origin, key, "remote", hops, found)
            exhausted = len(visited) == len(self._reachable(origin))
            return Resolution(requester, origin, key, "not_found" if exhausted else "unresolved", hops, None)

        # flood: breadth-first over the cluster graph
        queue = deque([origin])
        while queue:
            here = queue.popleft()
            for _, v in self._links_from(here):
                c = self.nodes[v].cluster_id
                if c in visited:
                    continue
                if visit(v):
                    return Resolution(requester, origin, key, "remote", hops, c)
                queue.append(c)
        return Resolution(requester, origin, key, "not_found", hops, None)

    def _reachable(self, origin: int) -> set[int]:
        seen = {origin}
        queue = deque([origin])
        while queue:
            here = queue.popleft()
            for _, v in self._links_from(here):
                c = self.nodes[v].cluster_id
                if c not in seen:
                    seen.add(c)
                    queue.append(c)
        return seen

    def _record(self, res: Resolution) -> None:
        m = self.metrics
        m.requests_total += 1
        m.hops_histogram[res.hops] = m.hops_histogram.get(res.hops, 0) + 1
        m.clusters_visited_max = max(m.clusters_visited_max, res.clusters_visited)
        if res.outcome == "local":
            m.served_local += 1
        elif res.outcome == "remote":
            m.served_remote += 1
        else:
            if res.outcome == "not_found":
                m.not_found += 1
            else:
                m.unresolved += 1
            if self.exists(res.file):
                m.unresolved_existing += 1

    def next_request(self, node: NodeState) -> bytes:
        rng = self._rng_requests
        prev = self._last_request.get(node.node_id)
        if prev is not None and rng.random() < self.config.repeat_probability:
            return prev
        rank = self.config.workload.rank_for(rng.random())
        key = self.file_keys[self.catalog[node.cluster_id][rank - 1]]
        self._last_request[node.node_id] = key
        return key

    # -- phases --------------------------------------------------------

    def _advertise(self) -> None:
        r, period = self.round, self.cfg.full_refresh_period
        for v, node in self.nodes.items():
            if not node.online:
                continue
            if v in self._needs_epoch or (r + v) % period == 0:
                self._needs_epoch.discard(v)
                start_epoch(node, r, self.cfg.rumor_emissions)
                self._log("advertise", node=v, files=len(node.local_files))

    def _gossip(self) -> int:
        r, cfg = self.round, self.cfg
        outgoing = []
        for v, node in self.nodes.items():
            if not node.online or (r + v) % cfg.gossip_period:
                continue
            msgs = gossip_round(node, self._rng_gossip, cfg.fanout, r)
            if msgs:
                self._log("gossip_emit", node=v, targets=[t for t, _ in msgs], size=len(msgs[0][1]))
            outgoing.extend((v, t, p) for t, p in msgs)
        sent = 0
        # all copies of one emission share a payload object; validate it once
        scanned: dict[int, tuple | None] = {}
        for sender, target, payload in outgoing:
            sent += len(payload)
            self.metrics.messages += 1
            dest = self.nodes[target]
            if not dest.online:
                continue
            if id(payload) not in scanned:
                try:
                    scanned[id(payload)] = wire.scan(payload, self.params)
                except PayloadError:
                    scanned[id(payload)] = None
            view = scanned[id(payload)]
            if view is None:
                self.metrics.malformed_payloads += 1
                continue
            learned = merge_scanned(dest, view, r, cfg)
            self._log("gossip_receive", node=target, sender=sender, learned=learned)
        self.metrics.gossip_bytes += sent
        return sent

    def _expire(self) -> None:
        for v, node in self.nodes.items():
            if not node.online:
                continue
            peers, slots = expiry_sweep(node, self.round, self.cfg)
            if peers or slots:
                self._log("expiry", node=v, peers=peers, epochs=[list(s) for s in slots])

    def _requests(self) -> None:
        if self.round < self.config.warmup_rounds:
            return
        p = self.config.request_probability
        for v, node in self.nodes.items():
            if not node.online or self._rng_requests.random() >= p:
                continue
            key = self.next_request(node)
            res = self.handle_request(v, key)
            self._record(res)
            self._log("request", node=v, file=key.decode(), outcome=res.outcome, hops=res.hops)

    def _churn(self) -> None:
        ch = self.config.churn
        if ch.join_probability == 0 and ch.leave_probability == 0:
            return
        rng = self._rng_churn
        for v, node in self.nodes.items():
            if node.online:
                if rng.random() < ch.leave_probability:
                    node.online = False
                    self.metrics.leaves += 1
                    self._log("leave", node=v)
            elif rng.random() < ch.join_probability:
                node.online = True
                node.reset()
                self._bootstrap(node, self.round, self.config.overlay.intra_degree)
                self._needs_epoch.add(v)
                self.metrics.joins += 1
                self._log("join", node=v)

    def step(self) -> None:
        m = self.metrics
        before = (m.served_local, m.false_positive_lookups, m.false_negative_lookups)
        self._advertise()
        sent = self._gossip()
        self._expire()
        self._requests()
        self._churn()
        self.per_round.append((
            self.round,
            m.served_local - before[0],
            m.false_positive_lookups - before[1],
            m.false_negative_lookups - before[2],
            sent,
        ))
        self.round += 1

    def run(self, rounds: int | None = None) -> SimMetrics:
        for _ in range(self.config.rounds if rounds is None else rounds):
            self.step()
        n = len(self.nodes)
        self.metrics.gossip_bytes_per_node_per_round = (
            self.metrics.gossip_bytes / (n * self.round) if self.round else 0.0
        )
        return self.metrics

    def per_round_csv(self) -> str:
        buf = io.StringIO()
        buf.write("round,served_local,fp,fn,bytes\n")
        for row in self.per_round:
            buf.write(",".join(map(str, row)) + "\n")
        return buf.getvalue()


def sim_run(config: SimConfig) -> SimMetrics:
    return Simulator(config).run()
