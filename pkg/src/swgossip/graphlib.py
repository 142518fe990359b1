"""Undirected simple graphs and small-world metrics.

The metric suite compares a graph's clustering coefficient and average path
length (on its largest connected component) with uniformly random G(n, m)
graphs of the same size.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Iterator, TextIO

import numba
import numpy as np

Node = Hashable

# above this many LCC nodes the all-pairs sweep runs compiled
SPARSE_BFS_THRESHOLD = 400


class GraphError(ValueError):
    pass


class UndefinedMetricError(GraphError):
    """Raised when a metric has no meaning for the given graph."""


class UndirectedGraph:
    """Adjacency-set graph with no self-loops or parallel edges.

    Treated as immutable once handed to a metric function; the mutators exist
    for construction only.
    """

    __slots__ = ("_adj",)

    def __init__(self, nodes: Iterable[Node] = (), edges: Iterable[tuple[Node, Node]] = ()) -> None:
        self._adj: dict[Node, set[Node]] = {}
        for v in nodes:
            self.add_node(v)
        for u, v in edges:
            self.add_edge(u, v)

    def add_node(self, v: Node) -> None:
        self._adj.setdefault(v, set())

    def add_edge(self, u: Node, v: Node) -> bool:
        """Add ``u``-``v``; self-loops and existing edges are ignored.

        Returns True when a new edge was created.
        """
        if u == v:
            self.add_node(u)
            return False
        nu = self._adj.setdefault(u, set())
        nv = self._adj.setdefault(v, set())
        if v in nu:
            return False
        nu.add(v)
        nv.add(u)
        return True

    def remove_edge(self, u: Node, v: Node) -> None:
        self._adj[u].remove(v)
        self._adj[v].remove(u)

    def has_edge(self, u: Node, v: Node) -> bool:
        return v in self._adj.get(u, ())

    def neighbors(self, v: Node) -> set[Node]:
        return self._adj[v]

    def degree(self, v: Node) -> int:
        return len(self._adj[v])

    @property
    def nodes(self) -> list[Node]:
        return list(self._adj)

    def edges(self) -> Iterator[tuple[Node, Node]]:
        """Each edge once, as (u, v) in first-seen orientation."""
        seen: set[Node] = set()
        for u, nbrs in self._adj.items():
            for v in nbrs:
                if v not in seen:
                    yield (u, v)
            seen.add(u)

    def n_nodes(self) -> int:
        return len(self._adj)

    def n_edges(self) -> int:
        return sum(len(n) for n in self._adj.values()) // 2

    def __len__(self) -> int:
        return len(self._adj)

    def __contains__(self, v: object) -> bool:
        return v in self._adj

    def __repr__(self) -> str:
        return f"UndirectedGraph(n={self.n_nodes()}, m={self.n_edges()})"

    def copy(self) -> "UndirectedGraph":
        g = UndirectedGraph()
        g._adj = {v: set(n) for v, n in self._adj.items()}
        return g

    def subgraph(self, nodes: Iterable[Node]) -> "UndirectedGraph":
        keep = set(nodes)
        g = UndirectedGraph()
        g._adj = {v: self._adj[v] & keep for v in self._adj if v in keep}
        return g

    def relabel(self, mapping: dict) -> "UndirectedGraph":
        return UndirectedGraph(
            (mapping[v] for v in self._adj),
            ((mapping[u], mapping[v]) for u, v in self.edges()),
        )

    def same_structure(self, other: "UndirectedGraph") -> bool:
        return self._adj == other._adj

    def check_invariants(self) -> None:
        for u, nbrs in self._adj.items():
            if u in nbrs:
                raise GraphError(f"self-loop at {u!r}")
            for v in nbrs:
                if u not in self._adj.get(v, ()):
                    raise GraphError(f"asymmetric edge {u!r}-{v!r}")


# ---------------------------------------------------------------- edge lists


def write_edgelist(g: UndirectedGraph, fh: TextIO, comment: str | None = None) -> None:
    """One ``u v`` pair per line; isolated nodes are written as ``# node v``."""
    if comment:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
    for v in _sorted_nodes(g.nodes):
        if g.degree(v) == 0:
            fh.write(f"# node {v}\n")
    pairs = [tuple(_sorted_nodes(e)) for e in g.edges()]
    pairs.sort(key=lambda e: (_node_key(e[0]), _node_key(e[1])))
    for u, v in pairs:
        fh.write(f"{u} {v}\n")


def read_edgelist(fh: TextIO) -> UndirectedGraph:
    """Parse the format written by :func:`write_edgelist`. Ids stay strings."""
    g = UndirectedGraph()
    for lineno, raw in enumerate(fh, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "node":
                g.add_node(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'u v', got {line!r}")
        g.add_edge(parts[0], parts[1])
    return g


# ---------------------------------------------------------------- metrics


def _node_key(v: Node):
    # numbers before strings so mixed graphs still order deterministically
    return (0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))


def _sorted_nodes(nodes: Iterable[Node]) -> list[Node]:
    return sorted(nodes, key=_node_key)


def local_clustering(g: UndirectedGraph, v: Node) -> float | None:
    """Fraction of neighbour pairs of ``v`` that are adjacent; None if deg < 2."""
    nbrs = g.neighbors(v)
    d = len(nbrs)
    if d < 2:
        return None
    links = 0
    for u in nbrs:
        links += len(g.neighbors(u) & nbrs)
    # every neighbour-neighbour edge was seen from both ends
    return links / (d * (d - 1))


def clustering_coefficient(g: UndirectedGraph) -> float:
    """Mean local clustering over nodes of degree >= 2 (0.0 if there are none)."""
    values = [c for v in g.nodes if (c := local_clustering(g, v)) is not None]
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


def connected_components(g: UndirectedGraph) -> list[set[Node]]:
    seen: set[Node] = set()
    comps = []
    for start in g.nodes:
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in g.neighbors(u):
                if w not in comp:
                    comp.add(w)
                    queue.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def largest_connected_component(g: UndirectedGraph) -> UndirectedGraph:
    """Induced subgraph on the biggest component.

    Equal-sized components are ranked by their smallest node id.
    """
    comps = connected_components(g)
    if not comps:
        return UndirectedGraph()
    best = min(comps, key=lambda c: (-len(c), _node_key(min(c, key=_node_key))))
    return g.subgraph(best)


def bfs_distances(g: UndirectedGraph, source: Node) -> dict[Node, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in g.neighbors(u):
            if w not in dist:
                dist[w] = du
                queue.append(w)
    return dist


def _distance_sum_python(g: UndirectedGraph) -> int:
    return sum(sum(bfs_distances(g, v).values()) for v in g.nodes)


@numba.njit(cache=True)
def _bfs_sum_csr(indptr, indices, n):
    total = 0
    dist = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    for s in range(n):
        dist[:] = -1
        dist[s] = 0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u] + 1
            for p in range(indptr[u], indptr[u + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = du
                    total += du
                    queue[tail] = w
                    tail += 1
    return total


def _distance_sum_compiled(g: UndirectedGraph) -> int:
    # same BFS sweep over a CSR copy; integer sums keep it bit-identical
    index = {v: i for i, v in enumerate(g.nodes)}
    indptr = np.zeros(len(index) + 1, dtype=np.int64)
    flat = []
    for i, v in enumerate(g.nodes):
        nbrs = [index[w] for w in g.neighbors(v)]
        flat.extend(nbrs)
        indptr[i + 1] = indptr[i] + len(nbrs)
    return int(_bfs_sum_csr(indptr, np.asarray(flat, dtype=np.int64), len(index)))


def average_path_length(g: UndirectedGraph) -> float:
    """Exact mean shortest-path length over unordered pairs of the LCC."""
    lcc = largest_connected_component(g)
    n = lcc.n_nodes()
    if n < 2:
        raise UndefinedMetricError(
            f"average path length needs an LCC of >= 2 nodes, got {n}"
        )
    if n <= SPARSE_BFS_THRESHOLD:
        total = _distance_sum_python(lcc)
    else:
        total = _distance_sum_compiled(lcc)
    # total counts every ordered pair
    return total / (n * (n - 1))


def random_graph_gnm(n: int, m: int, seed: int) -> UndirectedGraph:
    """Uniform simple graph on nodes 0..n-1 with exactly ``m`` edges."""
    if n < 0 or m < 0:
        raise GraphError("n and m must be non-negative")
    n_pairs = n * (n - 1) // 2
    if m > n_pairs:
        raise GraphError(f"{m} edges do not fit in a simple graph on {n} nodes")
    rng = random.Random(seed)
    g = UndirectedGraph(range(n))
    for t in sorted(rng.sample(range(n_pairs), m)):
        g.add_edge(*unrank_pair(t, n))
    return g


def unrank_pair(t: int, n: int) -> tuple[int, int]:
    """Map 0 <= t < n(n-1)/2 to the t-th pair (i, j), i < j, in row-major order."""
    # rows i hold n-1-i pairs; find i with start(i) <= t < start(i+1),
    # start(i) = i*(2n - i - 1)/2
    i = (2 * n - 1 - math.isqrt((2 * n - 1) ** 2 - 8 * t)) // 2
    while i * (2 * n - i - 1) // 2 > t:
        i -= 1
    while (i + 1) * (2 * n - i - 2) // 2 <= t:
        i += 1
    j = t - i * (2 * n - i - 1) // 2 + i + 1
    return i, j


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class GraphMetrics:
    n_nodes: float
    n_links: float
    clustering: float
    avg_path_length: float
    lcc_nodes: float
    lcc_links: float


@dataclass(frozen=True)
class SmallWorldReport:
    observed: GraphMetrics
    random_baseline: GraphMetrics
    baseline_samples: int
    clustering_ratio: float | None
    path_ratio: float | None

    def to_dict(self) -> dict:
        o, b = self.observed, self.random_baseline
        return {
            "n_nodes": o.n_nodes,
            "n_links": o.n_links,
            "lcc_nodes": o.lcc_nodes,
            "lcc_links": o.lcc_links,
            "clustering": o.clustering,
            "avg_path_length": o.avg_path_length,
            "baseline_clustering": b.clustering,
            "baseline_path_length": b.avg_path_length,
            "clustering_ratio": self.clustering_ratio,
            "path_ratio": self.path_ratio,
        }


def graph_metrics(g: UndirectedGraph) -> GraphMetrics:
    lcc = largest_connected_component(g)
    return GraphMetrics(
        n_nodes=g.n_nodes(),
        n_links=g.n_edges(),
        clustering=clustering_coefficient(lcc),
        avg_path_length=average_path_length(lcc),
        lcc_nodes=lcc.n_nodes(),
        lcc_links=lcc.n_edges(),
    )


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs)


def small_world_report(g: UndirectedGraph, samples: int = 10, seed: int = 0) -> SmallWorldReport:
    """Metrics of the LCC of ``g`` against ``samples`` matched G(n, m) graphs.

    Random graphs are sized to the LCC (its node and link counts); their path
    length is measured on their own LCC, since they may be disconnected.
    """
    if samples < 1:
        raise GraphError("samples must be >= 1")
    lcc = largest_connected_component(g)
    observed = GraphMetrics(
        n_nodes=g.n_nodes(),
        n_links=g.n_edges(),
        clustering=clustering_coefficient(lcc),
        avg_path_length=average_path_length(lcc),
        lcc_nodes=lcc.n_nodes(),
        lcc_links=lcc.n_edges(),
    )
    rng = random.Random(seed)
    sampled = [
        graph_metrics(random_graph_gnm(lcc.n_nodes(), lcc.n_edges(), rng.getrandbits(64)))
        for _ in range(samples)
    ]
    baseline = GraphMetrics(
        **{f: _mean([getattr(s, f) for s in sampled]) for f in asdict(sampled[0])}
    )
    c_ratio = observed.clustering / baseline.clustering if baseline.clustering > 0 else None
    p_ratio = observed.avg_path_length / baseline.avg_path_length
    return SmallWorldReport(observed, baseline, samples, c_ratio, p_ratio)


def ring_lattice(n: int, kappa: int) -> UndirectedGraph:
    """Ring of ``n`` nodes, each joined to its ``kappa`` nearest neighbours."""
    if kappa % 2 or kappa >= n:
        raise GraphError("kappa must be even and smaller than n")
    g = UndirectedGraph(range(n))
    for v in range(n):
        for step in range(1, kappa // 2 + 1):
            g.add_edge(v, (v + step) % n)
    return g


def complete_graph(n: int) -> UndirectedGraph:
    return UndirectedGraph(range(n), ((i, j) for i in range(n) for j in range(i + 1, n)))
