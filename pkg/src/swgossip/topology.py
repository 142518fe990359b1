"""Clustered overlay construction and inter-cluster wiring.

Nodes are integers ``0 .. C*G-1``; cluster ``c`` owns ``c*G .. c*G+G-1``. Each
cluster starts as a ring lattice topped up with random chords to the target
intra-cluster degree, and clusters are then joined by one of three wirings:

* ``random``  - Poisson(param) cross edges per cluster between random nodes
* ``gateway`` - the lowest-id nodes of each cluster link to gateways elsewhere
* ``rewire``  - each intra edge is re-pointed to another cluster w.p. param

Whatever the wiring, the quotient graph over clusters is made connected by
adding random cross edges between its components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .graphlib import UndirectedGraph, bfs_distances, connected_components, write_edgelist

WIRINGS = ("random", "gateway", "rewire")
MAX_REPAIR_ATTEMPTS = 100

# sub-stream ids keep the wiring modes on independent random streams
_STREAM_INTRA, _STREAM_RANDOM, _STREAM_GATEWAY, _STREAM_REWIRE, _STREAM_REPAIR = range(5)


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class OverlaySpec:
    n_clusters: int
    nodes_per_cluster: int
    intra_degree: int
    wiring: str = "random"
    wiring_param: float = 1.0
    seed: int = 0
    gateways_per_cluster: int = 1  # used by wiring="gateway" only

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.nodes_per_cluster < 1:
            raise TopologyError("need at least one cluster of at least one node")
        if self.nodes_per_cluster > 1 and not 1 <= self.intra_degree < self.nodes_per_cluster:
            raise TopologyError(
                f"intra_degree must be in [1, {self.nodes_per_cluster - 1}], "
                f"got {self.intra_degree}"
            )
        if self.wiring not in WIRINGS:
            raise TopologyError(f"wiring must be one of {WIRINGS}, got {self.wiring!r}")
        if self.wiring_param < 0:
            raise TopologyError("wiring_param must be >= 0")
        if self.wiring == "rewire" and self.wiring_param > 1:
            raise TopologyError("rewire probability must be <= 1")


@dataclass(frozen=True)
class Overlay:
    graph: UndirectedGraph
    cluster_of: dict[int, int]
    gateways: dict[int, frozenset[int]] = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return len(set(self.cluster_of.values()))

    def members(self, cluster: int) -> list[int]:
        return sorted(v for v, c in self.cluster_of.items() if c == cluster)

    def clusters(self) -> list[int]:
        return sorted(set(self.cluster_of.values()))

    def is_cross(self, u: int, v: int) -> bool:
        return self.cluster_of[u] != self.cluster_of[v]

    def cross_edges(self) -> list[tuple[int, int]]:
        return sorted(
            (min(u, v), max(u, v)) for u, v in self.graph.edges() if self.is_cross(u, v)
        )

    def intra_edges(self) -> list[tuple[int, int]]:
        return sorted(
            (min(u, v), max(u, v)) for u, v in self.graph.edges() if not self.is_cross(u, v)
        )

    def quotient_graph(self) -> UndirectedGraph:
        q = UndirectedGraph(self.clusters())
        for u, v in self.cross_edges():
            q.add_edge(self.cluster_of[u], self.cluster_of[v])
        return q

    def quotient_connected(self) -> bool:
        return len(connected_components(self.quotient_graph())) <= 1

    def external_links(self, v: int) -> list[int]:
        return sorted(w for w in self.graph.neighbors(v) if self.is_cross(v, w))

    def check_invariants(self) -> None:
        self.graph.check_invariants()
        if set(self.graph.nodes) != set(self.cluster_of):
            raise TopologyError("cluster map does not cover the node set")
        for u, v in self.cross_edges():
            for end in (u, v):
                if end not in self.gateways.get(self.cluster_of[end], ()):
                    raise TopologyError(f"cross-edge endpoint {end} is not a gateway")

    def write(self, edges_fh: TextIO, clusters_fh: TextIO) -> None:
        """Edge list plus a ``node_id,cluster_id,gateway`` sidecar CSV."""
        write_edgelist(self.graph, edges_fh)
        writer = csv.writer(clusters_fh, lineterminator="\n")
        writer.writerow(("node_id", "cluster_id", "gateway"))
        for v in sorted(self.cluster_of):
            c = self.cluster_of[v]
            writer.writerow((v, c, int(v in self.gateways.get(c, ()))))


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _with_gateways(graph: UndirectedGraph, cluster_of: dict[int, int], keep=None) -> Overlay:
    keep = keep or {}
    gws = {c: set(keep.get(c, ())) for c in set(cluster_of.values())}
    for u, v in graph.edges():
        if cluster_of[u] != cluster_of[v]:
            gws[cluster_of[u]].add(u)
            gws[cluster_of[v]].add(v)
    return Overlay(graph, dict(cluster_of), {c: frozenset(s) for c, s in gws.items()})


def _intra_cluster(g: UndirectedGraph, members: list[int], degree: int, rng: np.random.Generator) -> None:
    size = len(members)
    if size == 1:
        return
    half = 1 if size == 2 else min(max(1, degree // 2), (size - 1) // 2)
    for i in range(size):
        for step in range(1, half + 1):
            g.add_edge(members[i], members[(i + step) % size])
    # chords top the mean degree up to the target when it is odd or capped
    deficit = degree * size / 2 - sum(g.degree(v) for v in members) / 2
    max_edges = size * (size - 1) // 2
    n_chords = int(round(deficit))
    attempts = 0
    while n_chords > 0 and attempts < 50 * size:
        attempts += 1
        if sum(g.degree(v) for v in members) // 2 >= max_edges:
            break
        a, b = rng.choice(size, 2, replace=False)
        if g.add_edge(members[a], members[b]):
            n_chords -= 1


def clustered_base(spec: OverlaySpec) -> Overlay:
    """Clusters with intra-cluster edges only (no wiring, no repair)."""
    g = UndirectedGraph()
    cluster_of = {}
    rng = _rng(spec.seed, _STREAM_INTRA)
    G = spec.nodes_per_cluster
    for c in range(spec.n_clusters):
        members = list(range(c * G, (c + 1) * G))
        for v in members:
            g.add_node(v)
            cluster_of[v] = c
        _intra_cluster(g, members, spec.intra_degree, rng)
    return _with_gateways(g, cluster_of)


def connect_clusters(overlay: Overlay, seed: int) -> Overlay:
    """Add random cross edges until the quotient graph is connected.

    Components are chained in order of their smallest cluster id, one random
    node pair per link, so ``k`` components cost exactly ``k - 1`` edges.
    """
    rng = _rng(seed, _STREAM_REPAIR)
    for _ in range(MAX_REPAIR_ATTEMPTS):
        comps = sorted(connected_components(overlay.quotient_graph()), key=min)
        if len(comps) <= 1:
            return overlay
        g = overlay.graph.copy()
        for left, right in zip(comps, comps[1:]):
            a = _random_member(overlay, sorted(left), rng)
            b = _random_member(overlay, sorted(right), rng)
            g.add_edge(a, b)
        overlay = _with_gateways(g, overlay.cluster_of, overlay.gateways)
    if not overlay.quotient_connected():
        raise TopologyError("could not connect the cluster graph")
    return overlay


def _random_member(overlay: Overlay, clusters: list[int], rng: np.random.Generator) -> int:
    c = clusters[rng.integers(len(clusters))]
    members = overlay.members(c)
    return members[rng.integers(len(members))]


def wire_random(overlay: Overlay, edges_per_cluster: float, seed: int) -> Overlay:
    """Add Poisson(edges_per_cluster) cross edges out of every cluster."""
    if edges_per_cluster < 0:
        raise TopologyError("edges_per_cluster must be >= 0")
    clusters = overlay.clusters()
    if len(clusters) < 2 or edges_per_cluster == 0:
        return overlay
    rng = _rng(seed, _STREAM_RANDOM)
    members = {c: overlay.members(c) for c in clusters}
    g = overlay.graph.copy()
    for c in clusters:
        for _ in range(int(rng.poisson(edges_per_cluster))):
            u = members[c][rng.integers(len(members[c]))]
            others = [x for x in clusters if x != c]
            d = others[rng.integers(len(others))]
            v = members[d][rng.integers(len(members[d]))]
            g.add_edge(u, v)
    return _with_gateways(g, overlay.cluster_of, overlay.gateways)


def wire_gateways(
    overlay: Overlay, gateways_per_cluster: int, links_per_gateway: int, seed: int
) -> Overlay:
    """Designate the lowest-id nodes of each cluster as gateways and link them.

    Each gateway picks ``links_per_gateway`` distinct other clusters uniformly
    and connects to a uniformly chosen gateway in each.
    """
    clusters = overlay.clusters()
    members = {c: overlay.members(c) for c in clusters}
    if gateways_per_cluster < 1:
        raise TopologyError("gateways_per_cluster must be >= 1")
    if any(gateways_per_cluster > len(m) for m in members.values()):
        raise TopologyError("more gateways requested than nodes in a cluster")
    if links_per_gateway < 0 or links_per_gateway > len(clusters) - 1:
        raise TopologyError(
            f"links_per_gateway={links_per_gateway} needs that many other clusters, "
            f"only {len(clusters) - 1} available"
        )
    rng = _rng(seed, _STREAM_GATEWAY)
    chosen = {c: members[c][:gateways_per_cluster] for c in clusters}
    g = overlay.graph.copy()
    for c in clusters:
        others = [x for x in clusters if x != c]
        for gw in chosen[c]:
            for i in rng.choice(len(others), links_per_gateway, replace=False):
                targets = chosen[others[i]]
                g.add_edge(gw, targets[rng.integers(len(targets))])
    keep = {c: set(overlay.gateways.get(c, ())) | set(chosen[c]) for c in clusters}
    return _with_gateways(g, overlay.cluster_of, keep)


def rewire_watts(overlay: Overlay, beta: float, seed: int) -> Overlay:
    """Re-point intra-cluster edges to other clusters with probability ``beta``.

    Edges are visited in sorted order; the lower endpoint is kept and the other
    replaced by a uniform node outside its cluster. A replacement that would
    duplicate an existing edge is skipped and the original edge kept.
    """
    if not 0.0 <= beta <= 1.0:
        raise TopologyError(f"beta must be in [0, 1], got {beta}")
    clusters = overlay.clusters()
    if beta == 0 or len(clusters) < 2:
        return overlay
    rng = _rng(seed, _STREAM_REWIRE)
    nodes = sorted(overlay.cluster_of)
    g = overlay.graph.copy()
    for u, v in overlay.intra_edges():
        if rng.random() >= beta:
            continue
        cu = overlay.cluster_of[u]
        while True:
            w = nodes[rng.integers(len(nodes))]
            if overlay.cluster_of[w] != cu:
                break
        if g.has_edge(u, w):
            continue
        g.remove_edge(u, v)
        g.add_edge(u, w)
    return _with_gateways(g, overlay.cluster_of, overlay.gateways)


def build_overlay(spec: OverlaySpec) -> Overlay:
    base = clustered_base(spec)
    if spec.wiring == "random":
        wired = wire_random(base, spec.wiring_param, spec.seed)
    elif spec.wiring == "gateway":
        wired = base
        if spec.n_clusters > 1:
            links = int(round(spec.wiring_param))
            wired = wire_gateways(base, spec.gateways_per_cluster, links, spec.seed)
    else:
        wired = rewire_watts(base, spec.wiring_param, spec.seed)
    return connect_clusters(wired, spec.seed)


def quotient_path_length(overlay: Overlay) -> float:
    q = overlay.quotient_graph()
    n = q.n_nodes()
    if n < 2:
        return 0.0
    total = sum(sum(bfs_distances(q, c).values()) for c in q.nodes)
    return total / (n * (n - 1))
