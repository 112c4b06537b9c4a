"""Controller-centric comparison baseline (EPTA-style).

Components go to hosts close (in hops) to a controller node, chain traffic is
relayed through the controller, and failure flags are not consulted while
placing.  Landing on a failed node costs one retry: the request is placed
again on alive nodes and its recorded latency doubles.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .cost_model import (CostBreakdown, EvaluationError, Placement, RoutingView, e2e_delay,
                         evaluate_cost, instances_of, mean_registry_delay)
from .topology import NodeKind, Path, Topology
from .workload import Catalog, ServiceRequest, components_of, select_content_node, virtual_edges_of

EPS = 1e-9


@dataclass
class EptaState:
    controller: str
    registry_nodes: frozenset[str]
    deployed_instances: set[tuple[str, str]] = field(default_factory=set)
    reuse: bool = True
    retries: int = 0

    @classmethod
    def initialize(cls, topology: Topology, controller: str, reuse: bool = True) -> "EptaState":
        topology.node(controller)
        return cls(controller, frozenset(topology.registry_nodes(alive_only=False)), reuse=reuse)


@dataclass
class EptaDecision:
    placement: Placement
    path: Path
    cost: CostBreakdown
    delay: float
    retried: bool

    @property
    def recorded_latency(self) -> float:
        return 2 * self.delay if self.retried else self.delay


def hop_distances(topology: Topology, root: str) -> dict[str, int]:
    adj = topology.adjacency(alive_only=False)
    dist = {root: 0}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if nb not in dist:
                dist[nb] = dist[node] + 1
                queue.append(nb)
    return dist


def candidate_order(topology: Topology, controller: str, skip_failed: bool = False) -> list[str]:
    """Hosting nodes by hop distance to the controller, cloud servers last, ties by id."""
    hops = hop_distances(topology, controller)
    nodes = [n for n in topology.hosting_nodes(alive_only=False)
             if n in hops and not (skip_failed and topology.nodes[n].failed)]
    return sorted(nodes, key=lambda n: (topology.nodes[n].kind == NodeKind.CLOUD_SERVER, hops[n], n))


def _assign(state, topology, request, catalog, order):
    residual = {n: topology.nodes[n].residual for n in order}
    hosts, loads = {}, {}
    for comp in components_of(request, catalog):
        spec = catalog.component(comp)
        for node in order:
            need = 0.0 if state.reuse and (comp, node) in state.deployed_instances else spec.footprint
            if residual[node] + EPS >= need:
                residual[node] -= need
                loads[node] = loads.get(node, 0.0) + need
                hosts[comp] = node
                break
        else:
            return None, None
    return hosts, loads


def _relay_routes(view, request, catalog, hosts, controller, source):
    def leg(a, b):
        p = view.cost_path(a, b)
        if p is None:
            raise EvaluationError(f"no alive route between {a!r} and {b!r}")
        return p

    edges = {}
    for a, b in virtual_edges_of(request, catalog):
        if catalog.is_database(b):
            edges[(a, b)] = leg(hosts[a], hosts[b])
        else:
            edges[(a, b)] = leg(hosts[a], controller) + leg(controller, hosts[b])
    return (leg(source, hosts[request.first]), edges, leg(hosts[request.last], request.end_user))


def place_request_epta(topology: Topology, request: ServiceRequest, catalog: Catalog,
                       delay_threshold: float, controller: str,
                       state: EptaState) -> EptaDecision | None:
    """Place one request the baseline's way and commit it; None means rejected.

    ``delay_threshold`` is accepted for interface symmetry; the baseline does
    not enforce it.
    """
    source = select_content_node(request, topology)
    if source is None:
        return None
    hosts, loads = _assign(state, topology, request, catalog, candidate_order(topology, controller))
    if hosts is None:
        return None
    retried = any(topology.nodes[h].failed for h in hosts.values())
    if retried:
        state.retries += 1
        hosts, loads = _assign(state, topology, request, catalog,
                               candidate_order(topology, controller, skip_failed=True))
        if hosts is None:
            return None
    view = RoutingView(topology)
    try:
        ingress, edges, egress = _relay_routes(view, request, catalog, hosts, controller, source)
    except EvaluationError:
        return None
    placement = Placement(request.id, dict(hosts), edges, ingress, egress, state.registry_nodes)
    try:
        delay = e2e_delay(placement, request, topology, catalog, view)
    except EvaluationError:
        return None
    cost = evaluate_cost(placement, request, topology, catalog, state.deployed_instances, state.reuse)
    for node_id, need in loads.items():
        node = topology.nodes[node_id]
        node.residual = max(0.0, node.residual - need)
    state.deployed_instances |= instances_of(placement)
    walk = ingress
    for ms_a, ms_b in zip(request.chain, request.chain[1:]):
        walk = walk + edges[(ms_a, ms_b)]
    walk = walk + egress
    return EptaDecision(placement, walk, cost, delay, retried)


@dataclass
class EptaOutcome:
    request_id: str
    accepted: bool
    placement: Placement | None = None
    cost: CostBreakdown = field(default_factory=CostBreakdown)
    delay: float = math.nan
    recorded_latency: float = math.nan
    registry_delay: float = math.nan
    retried: bool = False
    wall_time: float = 0.0
    failed_nodes: tuple[str, ...] = ()


def run_epta(topology: Topology, requests: Sequence[ServiceRequest], catalog: Catalog,
             delay_threshold: float, state: EptaState,
             failures: dict[int, dict[str, bool]] | None = None) -> list[EptaOutcome]:
    """Run the baseline over a request sequence.

    ``failures`` maps a request index to node state changes (node -> failed)
    that take effect before that request; the baseline never reads them when
    choosing hosts.
    """
    failures = failures or {}
    outcomes = []
    for i, req in enumerate(requests):
        for node_id, down in failures.get(i, {}).items():
            topology.node(node_id).failed = down
        started = time.perf_counter()
        before = state.retries
        decision = place_request_epta(topology, req, catalog, delay_threshold, state.controller, state)
        elapsed = (time.perf_counter() - started) * 1e3
        out = EptaOutcome(req.id, decision is not None, wall_time=elapsed,
                          retried=state.retries > before,
                          failed_nodes=tuple(sorted(topology.failed_nodes())))
        if decision is not None:
            out.placement, out.cost, out.delay = decision.placement, decision.cost, decision.delay
            out.recorded_latency = decision.recorded_latency
            out.registry_delay = mean_registry_delay(decision.placement, req, RoutingView(topology))
        outcomes.append(out)
    return outcomes
