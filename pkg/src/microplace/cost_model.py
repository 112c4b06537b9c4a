"""Cost, delay and feasibility evaluation of candidate placements.

A :class:`Placement` covers one request: a host per component plus a route
per virtual edge, an ingress route (content node to first host) and an
egress route (last host to end user).  All evaluation functions here are
pure given a topology snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .topology import Path, Topology, TopologyError, single_source
from .workload import (Catalog, ServiceRequest, components_of, select_content_node,
                       virtual_edges_of)


class EvaluationError(ValueError):
    """Raised when a placement cannot be evaluated (missing host, broken route...)."""


@dataclass
class Placement:
    request_id: str
    component_host: dict[str, str]
    edge_route: dict[tuple[str, str], Path]
    ingress: Path
    egress: Path
    registry_nodes: frozenset[str] = frozenset()

    @property
    def hosts(self) -> set[str]:
        return set(self.component_host.values())

    @property
    def content_node(self) -> str:
        return self.ingress.source

    def routes(self) -> list[Path]:
        return [self.ingress, *self.edge_route.values(), self.egress]


@dataclass(frozen=True)
class CostBreakdown:
    operational: float = 0.0
    deployment: float = 0.0
    communication: float = 0.0

    @property
    def total(self) -> float:
        return self.operational + self.deployment + self.communication

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(self.operational + other.operational,
                             self.deployment + other.deployment,
                             self.communication + other.communication)

    @classmethod
    def sum(cls, parts: Iterable["CostBreakdown"]) -> "CostBreakdown":
        parts = list(parts)
        return cls(math.fsum(p.operational for p in parts),
                   math.fsum(p.deployment for p in parts),
                   math.fsum(p.communication for p in parts))


class RoutingView:
    """Lazily cached shortest paths over the alive part of a topology snapshot.

    Build a new view after any failure-flag change.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        self._by_cost: dict[str, dict[str, Path]] = {}
        self._by_delay: dict[str, dict[str, Path]] = {}

    def _tree(self, cache, src, weight):
        if src not in cache:
            cache[src] = single_source(self.topology, src, weight, alive_only=True)
        return cache[src]

    def cost_path(self, src: str, dst: str) -> Path | None:
        """Minimum link-cost alive path (the routing rule for virtual edges)."""
        return self._tree(self._by_cost, src, "cost").get(dst)

    def delay_path(self, src: str, dst: str) -> Path | None:
        return self._tree(self._by_delay, src, "delay").get(dst)

    def delay(self, src: str, dst: str) -> float:
        path = self.delay_path(src, dst)
        return math.inf if path is None else path.delay

    def registry_delay(self, host: str, registries: Iterable[str]) -> float:
        """Delay from ``host`` to its nearest alive registry (inf if none reachable)."""
        return min((self.delay(host, r) for r in registries), default=math.inf)


def _route(view: RoutingView, a: str, b: str) -> Path:
    path = view.cost_path(a, b)
    if path is None:
        raise EvaluationError(f"no alive route between {a!r} and {b!r}")
    return path


def route_placement(topology: Topology, request: ServiceRequest, catalog: Catalog,
                    hosts: Mapping[str, str], registries: Iterable[str] | None = None,
                    content_node: str | None = None, view: RoutingView | None = None) -> Placement:
    """Complete a host assignment with minimum-cost alive routes."""
    view = view or RoutingView(topology)
    if content_node is None:
        content_node = select_content_node(request, topology)
        if content_node is None:
            raise EvaluationError(f"{request.id}: no reachable content node")
    missing = [c for c in components_of(request, catalog) if c not in hosts]
    if missing:
        raise EvaluationError(f"{request.id}: unplaced components {missing}")
    edges = {(a, b): _route(view, hosts[a], hosts[b]) for a, b in virtual_edges_of(request, catalog)}
    if registries is None:
        registries = topology.registry_nodes()
    return Placement(
        request_id=request.id,
        component_host={c: hosts[c] for c in components_of(request, catalog)},
        edge_route=edges,
        ingress=_route(view, content_node, hosts[request.first]),
        egress=_route(view, hosts[request.last], request.end_user),
        registry_nodes=frozenset(registries),
    )


def _host(placement: Placement, component: str) -> str:
    try:
        return placement.component_host[component]
    except KeyError:
        raise EvaluationError(f"{placement.request_id}: component {component!r} not placed") from None


def operational_cost(placement: Placement, request: ServiceRequest, catalog: Catalog) -> float:
    terms = []
    for comp in components_of(request, catalog):
        _host(placement, comp)
        terms.append(catalog.component(comp).run_cost)
    return math.fsum(terms)


def deployment_cost(placement: Placement, request: ServiceRequest, catalog: Catalog,
                    already_deployed: Iterable[tuple[str, str]] = (), reuse: bool = True) -> float:
    """License cost of every (component, node) instance not already running.

    With ``reuse=False`` every placed component is charged.
    """
    deployed = set(already_deployed) if reuse else set()
    terms = []
    for comp in components_of(request, catalog):
        if (comp, _host(placement, comp)) not in deployed:
            terms.append(catalog.component(comp).deploy_cost)
    return math.fsum(terms)


def _route_measure(topology: Topology, route: Path | None, attr: str) -> list[float]:
    if route is None:
        raise EvaluationError("missing route")
    try:
        return [getattr(topology.link(p, q), attr) for p, q in zip(route.nodes, route.nodes[1:])]
    except TopologyError as exc:
        raise EvaluationError(str(exc)) from None


def _routed_edges(placement: Placement, request: ServiceRequest, catalog: Catalog):
    for edge in virtual_edges_of(request, catalog):
        if edge not in placement.edge_route:
            raise EvaluationError(f"{request.id}: virtual edge {edge} has no route")
        yield placement.edge_route[edge]


def communication_cost(placement: Placement, request: ServiceRequest, topology: Topology,
                       catalog: Catalog | None = None) -> float:
    """Link cost of ingress, chain routes, database routes and egress.

    Passing ``catalog`` additionally checks that every virtual edge is routed.
    """
    terms = _route_measure(topology, placement.ingress, "cost")
    routes = (_routed_edges(placement, request, catalog) if catalog is not None
              else placement.edge_route.values())
    for route in routes:
        terms += _route_measure(topology, route, "cost")
    terms += _route_measure(topology, placement.egress, "cost")
    return math.fsum(terms)


def evaluate_cost(placement: Placement, request: ServiceRequest, topology: Topology,
                  catalog: Catalog, already_deployed: Iterable[tuple[str, str]] = (),
                  reuse: bool = True) -> CostBreakdown:
    return CostBreakdown(
        operational=operational_cost(placement, request, catalog),
        deployment=deployment_cost(placement, request, catalog, already_deployed, reuse),
        communication=communication_cost(placement, request, topology, catalog),
    )


def instances_of(placement: Placement) -> set[tuple[str, str]]:
    return set(placement.component_host.items())


def delay_terms(placement: Placement, request: ServiceRequest, topology: Topology,
                catalog: Catalog, view: RoutingView | None = None) -> dict[str, float]:
    """The six end-to-end delay terms, keyed by what they measure."""
    view = view or RoutingView(topology)
    links = []
    for route in _routed_edges(placement, request, catalog):
        links += _route_measure(topology, route, "delay")
    processing, lifecycle, registry = [], [], []
    registries = sorted(placement.registry_nodes)
    for ms_id in request.chain:
        host = _host(placement, ms_id)
        spec = catalog.microservices[ms_id]
        processing.append(spec.processing_delay)
        lifecycle.append(spec.lifecycle_delay(topology.node(host).kind))
        reg = view.registry_delay(host, registries)
        if math.isinf(reg):
            raise EvaluationError(f"{request.id}: no registry reachable from {host!r}")
        registry.append(reg)
    return {
        "routes": math.fsum(links),
        "processing": math.fsum(processing),
        "ingress": math.fsum(_route_measure(topology, placement.ingress, "delay")),
        "egress": math.fsum(_route_measure(topology, placement.egress, "delay")),
        "containers": math.fsum(lifecycle),
        "registry": math.fsum(registry),
    }


def e2e_delay(placement: Placement, request: ServiceRequest, topology: Topology,
              catalog: Catalog, view: RoutingView | None = None) -> float:
    return math.fsum(delay_terms(placement, request, topology, catalog, view).values())


def mean_registry_delay(placement: Placement, request: ServiceRequest,
                        view: RoutingView) -> float:
    regs = [view.registry_delay(placement.component_host[ms], placement.registry_nodes)
            for ms in request.chain]
    return math.fsum(regs) / len(regs)


@dataclass(frozen=True)
class Violation:
    constraint: str  # "capacity", "delay" or "mapping"
    subject: str
    detail: str


@dataclass
class Verdict:
    violations: list[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.feasible


def _as_mapping(placements, requests) -> dict[str, Placement]:
    if isinstance(placements, Mapping):
        return dict(placements)
    return {p.request_id: p for p in placements}


def node_loads(placements: Iterable[Placement], catalog: Catalog, reuse: bool = True) -> dict[str, float]:
    """CPU load per node; a reused (component, node) instance is counted once."""
    if reuse:
        pairs = set()
        for p in placements:
            pairs |= instances_of(p)
        items = sorted(pairs)
    else:
        items = [pair for p in placements for pair in sorted(p.component_host.items())]
    loads: dict[str, list[float]] = {}
    for comp, node in items:
        loads.setdefault(node, []).append(catalog.component(comp).footprint)
    return {n: math.fsum(v) for n, v in loads.items()}


def check_feasible(placements: Mapping[str, Placement] | Sequence[Placement],
                   requests: Sequence[ServiceRequest], topology: Topology, catalog: Catalog,
                   delay_threshold: float, reuse: bool = True,
                   reserved: Mapping[str, float] | None = None) -> Verdict:
    """Check capacity, delay and mapping constraints; collects every violation.

    ``reserved`` is capacity already taken on a node by things outside these
    placements (registries, pre-existing instances).
    """
    by_request = _as_mapping(placements, requests)
    verdict = Verdict()
    add = verdict.violations.append
    view = RoutingView(topology)
    checked = []
    for req in requests:
        p = by_request.get(req.id)
        if p is None:
            add(Violation("mapping", req.id, "request has no placement"))
            continue
        ok = True
        expected = components_of(req, catalog)
        for comp in expected:
            host = p.component_host.get(comp)
            if host is None:
                add(Violation("mapping", req.id, f"{comp} not placed"))
                ok = False
                continue
            if host not in topology.nodes:
                add(Violation("mapping", req.id, f"{comp} on unknown node {host}"))
                ok = False
                continue
            node = topology.nodes[host]
            if not node.can_host:
                add(Violation("mapping", req.id, f"{comp} on non-hosting node {host}"))
                ok = False
            if node.failed:
                add(Violation("mapping", req.id, f"{comp} on failed node {host}"))
                ok = False
        extra = set(p.component_host) - set(expected)
        if extra:
            add(Violation("mapping", req.id, f"unexpected components {sorted(extra)}"))
            ok = False
        if not ok:
            continue
        content = p.ingress.source if p.ingress is not None else None
        wanted = [("ingress", p.ingress, content, p.component_host[req.first]),
                  ("egress", p.egress, p.component_host[req.last], req.end_user)]
        if content not in req.content_nodes:
            add(Violation("mapping", req.id, f"ingress starts at {content}, not a content node"))
            ok = False
        for a, b in virtual_edges_of(req, catalog):
            wanted.append((f"{a}->{b}", p.edge_route.get((a, b)),
                           p.component_host[a], p.component_host[b]))
        for name, route, start, end in wanted:
            if route is None:
                add(Violation("mapping", req.id, f"{name} has no route"))
                ok = False
                continue
            if route.source != start or route.target != end:
                add(Violation("mapping", req.id, f"{name} route does not join {start} and {end}"))
                ok = False
            for n in route.nodes:
                if n not in topology.nodes or topology.nodes[n].failed:
                    add(Violation("mapping", req.id, f"{name} route uses failed/unknown node {n}"))
                    ok = False
                    break
            for u, v in zip(route.nodes, route.nodes[1:]):
                if not topology.has_link(u, v):
                    add(Violation("mapping", req.id, f"{name} route uses missing link {u}-{v}"))
                    ok = False
                    break
        if not ok:
            continue
        checked.append(p)
        try:
            delay = e2e_delay(p, req, topology, catalog, view)
        except EvaluationError as exc:
            add(Violation("delay", req.id, str(exc)))
            continue
        if delay > delay_threshold:
            add(Violation("delay", req.id, f"e2e delay {delay:.3f} ms exceeds {delay_threshold} ms"))
    reserved = reserved or {}
    loads = node_loads(checked, catalog, reuse)
    for node_id in sorted(set(loads) | set(reserved)):
        if node_id not in topology.nodes:
            continue
        load = loads.get(node_id, 0.0) + reserved.get(node_id, 0.0)
        cap = topology.nodes[node_id].capacity
        if load > cap + 1e-9:
            add(Violation("capacity", node_id, f"load {load:.3f} exceeds capacity {cap}"))
    return verdict
