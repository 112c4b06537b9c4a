"""Physical network graph and the graph algorithms used by the placement code.

Nodes carry capacity, residual capacity, a failure flag and a registry flag.
Every query recomputes adjacency from the node flags, so flipping a failure
flag is visible to the next call without any cache invalidation.

Ties between equal-weight paths are always broken by the lexicographic order
of the node-id sequence.
"""

from __future__ import annotations

import copy
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed topologies or unknown node ids."""


class NodeKind(str, Enum):
    END_USER = "EndUser"
    CONTENT_GENERATOR = "ContentGenerator"
    BASE_STATION = "BaseStation"
    EDGE_SERVER = "EdgeServer"
    NETWORK_DEVICE = "NetworkDevice"
    CLOUD_SERVER = "CloudServer"

    @property
    def can_host(self) -> bool:
        return self not in (NodeKind.END_USER, NodeKind.CONTENT_GENERATOR)


HOSTING_KINDS = tuple(k for k in NodeKind if k.can_host)


@dataclass
class PhysicalNode:
    id: str
    kind: NodeKind
    capacity: float = 0.0
    residual: float | None = None
    failed: bool = False
    hosts_registry: bool = False

    def __post_init__(self):
        self.kind = NodeKind(self.kind)
        if not self.kind.can_host and self.capacity != 0:
            raise TopologyError(f"{self.kind.value} node {self.id!r} must have capacity 0")
        if self.capacity < 0:
            raise TopologyError(f"negative capacity on {self.id!r}")
        if self.residual is None:
            self.residual = float(self.capacity)
        if not 0 <= self.residual <= self.capacity + 1e-9:
            raise TopologyError(f"residual out of range on {self.id!r}")

    @property
    def can_host(self) -> bool:
        return self.kind.can_host


@dataclass(frozen=True)
class PhysicalLink:
    a: str
    b: str
    delay: float
    cost: float

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on {self.a!r}")
        if self.delay < 0 or self.cost < 0:
            raise TopologyError(f"negative delay/cost on link {self.a}-{self.b}")
        # endpoints are stored in sorted order so (p, q) and (q, p) compare equal
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


def link_key(p: str, q: str) -> tuple[str, str]:
    return (p, q) if p <= q else (q, p)


@dataclass(frozen=True)
class Path:
    """A node sequence with its accumulated link delay and link cost.

    Paths returned by the search functions are loop-free.  Relay routes built
    by concatenation (see the EPTA baseline) may revisit a node; they are
    still valid walks over existing links.
    """

    nodes: tuple[str, ...]
    delay: float = 0.0
    cost: float = 0.0

    def __len__(self):
        return len(self.nodes)

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def target(self) -> str:
        return self.nodes[-1]

    @property
    def is_simple(self) -> bool:
        return len(set(self.nodes)) == len(self.nodes)

    def links(self) -> list[tuple[str, str]]:
        return [link_key(p, q) for p, q in zip(self.nodes, self.nodes[1:])]

    def __add__(self, other: "Path") -> "Path":
        if self.target != other.source:
            raise TopologyError("paths do not join")
        return Path(self.nodes + other.nodes[1:], self.delay + other.delay, self.cost + other.cost)


@dataclass
class Topology:
    nodes: dict[str, PhysicalNode] = field(default_factory=dict)
    links: dict[tuple[str, str], PhysicalLink] = field(default_factory=dict)

    @classmethod
    def build(cls, nodes: Iterable[PhysicalNode], links: Iterable[PhysicalLink]) -> "Topology":
        topo = cls()
        for node in nodes:
            if node.id in topo.nodes:
                raise TopologyError(f"duplicate node {node.id!r}")
            topo.nodes[node.id] = node
        for link in links:
            for end in link.key:
                if end not in topo.nodes:
                    raise TopologyError(f"link endpoint {end!r} is not a node")
            if link.key in topo.links:
                raise TopologyError(f"duplicate link {link.key}")
            topo.links[link.key] = link
        return topo

    def copy(self) -> "Topology":
        return copy.deepcopy(self)

    def node(self, node_id: str) -> PhysicalNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TopologyError(f"unknown node {node_id!r}") from None

    def link(self, p: str, q: str) -> PhysicalLink:
        try:
            return self.links[link_key(p, q)]
        except KeyError:
            raise TopologyError(f"no link between {p!r} and {q!r}") from None

    def has_link(self, p: str, q: str) -> bool:
        return link_key(p, q) in self.links

    def is_alive(self, node_id: str) -> bool:
        return not self.node(node_id).failed

    def adjacency(self, alive_only: bool = False) -> dict[str, list[str]]:
        """Sorted neighbour lists, rebuilt from the current node flags."""
        adj = {n: [] for n, node in self.nodes.items() if not (alive_only and node.failed)}
        for a, b in self.links:
            if a in adj and b in adj:
                adj[a].append(b)
                adj[b].append(a)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def neighbors(self, node_id: str, alive_only: bool = False) -> list[str]:
        self.node(node_id)
        return self.adjacency(alive_only).get(node_id, [])

    def hosting_nodes(self, alive_only: bool = True) -> list[str]:
        return sorted(n for n, node in self.nodes.items()
                      if node.can_host and not (alive_only and node.failed))

    def nodes_of_kind(self, kind: NodeKind) -> list[str]:
        return sorted(n for n, node in self.nodes.items() if node.kind == kind)

    def registry_nodes(self, alive_only: bool = True) -> list[str]:
        return sorted(n for n, node in self.nodes.items()
                      if node.hosts_registry and not (alive_only and node.failed))

    def failed_nodes(self) -> set[str]:
        return {n for n, node in self.nodes.items() if node.failed}

    def make_path(self, node_seq: Iterable[str]) -> Path:
        seq = tuple(node_seq)
        if not seq:
            raise TopologyError("empty path")
        for n in seq:
            self.node(n)
        delay = cost = 0.0
        for p, q in zip(seq, seq[1:]):
            link = self.link(p, q)
            delay += link.delay
            cost += link.cost
        return Path(seq, delay, cost)


def set_failed(topology: Topology, node_id: str, failed: bool) -> Topology:
    topology.node(node_id).failed = bool(failed)
    return topology


def _search(topology, src, weight, alive_only, banned_nodes=(), banned_links=(), dst=None):
    """Dijkstra keyed on (weight, node sequence); returns settled node -> (w, seq).

    Popping on the full sequence makes the first settled label for each node
    the lexicographically smallest among its minimum-weight paths.
    """
    adj = topology.adjacency(alive_only)
    if src not in adj or src in banned_nodes:
        return {}
    banned_links = set(banned_links)
    heap = [(0.0, (src,))]
    settled = {}
    while heap:
        w, seq = heapq.heappop(heap)
        node = seq[-1]
        if node in settled:
            continue
        settled[node] = (w, seq)
        if node == dst:
            break
        for nxt in adj[node]:
            if nxt in settled or nxt in banned_nodes or nxt in seq:
                continue
            if banned_links and link_key(node, nxt) in banned_links:
                continue
            link = topology.links[link_key(node, nxt)]
            heapq.heappush(heap, (w + getattr(link, weight), seq + (nxt,)))
    return settled


def _best_path(topology, src, dst, weight, alive_only, banned_nodes=(), banned_links=()):
    topology.node(src)
    topology.node(dst)
    found = _search(topology, src, weight, alive_only, banned_nodes, banned_links, dst=dst)
    if dst not in found:
        return None
    return topology.make_path(found[dst][1])


def shortest_delay(topology: Topology, src: str, dst: str, alive_only: bool = True) -> Path | None:
    """Minimum-delay path from ``src`` to ``dst``, or None when disconnected."""
    return _best_path(topology, src, dst, "delay", alive_only)


def min_cost_path(topology: Topology, src: str, dst: str, alive_only: bool = True) -> Path | None:
    """Minimum link-cost path; this is how virtual edges are routed."""
    return _best_path(topology, src, dst, "cost", alive_only)


def single_source(topology: Topology, src: str, weight: str = "delay",
                  alive_only: bool = True) -> dict[str, Path]:
    topology.node(src)
    return {n: topology.make_path(seq)
            for n, (_, seq) in _search(topology, src, weight, alive_only).items()}


def all_pairs(topology: Topology, weight: str = "delay",
              alive_only: bool = True) -> dict[str, dict[str, Path]]:
    sources = [n for n in sorted(topology.nodes) if not (alive_only and topology.nodes[n].failed)]
    return {s: single_source(topology, s, weight, alive_only) for s in sources}


def _path_key(path: Path):
    return (path.delay, path.nodes)


def k_shortest_paths(topology: Topology, src: str, dst: str, delay_cap: float, k: int,
                     alive_only: bool = True) -> list[Path]:
    """Up to ``k`` loop-free paths in nondecreasing delay, each within ``delay_cap``.

    Yen's deviation search; candidates are ordered by (delay, node sequence).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    first = shortest_delay(topology, src, dst, alive_only)
    if first is None or first.delay > delay_cap:
        return []
    accepted = [first]
    seen = {first.nodes}
    candidates: list[tuple[float, tuple[str, ...], Path]] = []
    while len(accepted) < k:
        last = accepted[-1]
        for i in range(len(last.nodes) - 1):
            root = last.nodes[: i + 1]
            spur = root[-1]
            banned_links = {link_key(p.nodes[i], p.nodes[i + 1])
                            for p in accepted if p.nodes[: i + 1] == root and len(p.nodes) > i + 1}
            spur_path = _best_path(topology, spur, dst, "delay", alive_only,
                                   banned_nodes=set(root[:-1]), banned_links=banned_links)
            if spur_path is None:
                continue
            total = topology.make_path(root[:-1] + spur_path.nodes)
            if total.nodes in seen:
                continue
            seen.add(total.nodes)
            heapq.heappush(candidates, (total.delay, total.nodes, total))
        if not candidates:
            break
        delay, _, best = heapq.heappop(candidates)
        if delay > delay_cap:
            break
        accepted.append(best)
    return accepted


def pagerank(topology: Topology, damping: float = 0.85, tol: float = 1e-9,
             alive_only: bool = True, max_iter: int = 10_000) -> dict[str, float]:
    """Power-iteration PageRank on the undirected (alive) topology.

    Each link is followed in both directions with equal probability per
    neighbour; isolated nodes spread their mass uniformly.  Iterates until
    the L1 change drops below ``tol``.
    """
    adj = topology.adjacency(alive_only)
    ids = sorted(adj)
    n = len(ids)
    if n == 0:
        return {}
    index = {node: i for i, node in enumerate(ids)}
    transition = np.zeros((n, n))
    dangling = np.zeros(n, dtype=bool)
    for node, nbrs in adj.items():
        j = index[node]
        if not nbrs:
            dangling[j] = True
            continue
        for nb in nbrs:
            transition[index[nb], j] = 1.0 / len(nbrs)
    rank = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        spread = rank[dangling].sum() / n
        new = damping * (transition @ rank + spread) + (1.0 - damping) / n
        new /= new.sum()
        if np.abs(new - rank).sum() < tol:
            rank = new
            break
        rank = new
    return {node: float(rank[index[node]]) for node in ids}


def rank_nodes(topology: Topology, path: Path) -> dict[str, float]:
    """PageRank of the alive topology restricted to the path's hosting nodes.

    Scores are renormalised over the returned members.
    """
    if not path.nodes:
        raise TopologyError("empty path")
    scores = pagerank(topology)
    members = sorted({n for n in path.nodes if n in scores and topology.nodes[n].can_host})
    total = sum(scores[n] for n in members)
    if total <= 0:
        return {}
    return {n: scores[n] / total for n in members}
