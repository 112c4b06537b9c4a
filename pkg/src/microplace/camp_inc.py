"""Failure- and registry-aware chain placement heuristic (CaMP-INC).

Three cooperating roles share one :class:`OrchestratorState`:

* the placement manager (:func:`place_request`) tries the K delay-shortest
  content->user paths, fills each path greedily by node rank and keeps the
  cheapest complete placement;
* the failure detector (:func:`failure_tick`) folds a batch of health-check
  probes into the failed set;
* the registry manager (:func:`registry_decision`) decides whether the chosen
  path is too far from the existing service registries.

:func:`run_scenario` drives the three over a request sequence.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .cost_model import (CostBreakdown, EvaluationError, Placement, RoutingView, e2e_delay,
                         evaluate_cost, instances_of, mean_registry_delay, route_placement)
from .topology import Path, Topology, k_shortest_paths, rank_nodes, set_failed
from .workload import Catalog, ServiceRequest, components_of, select_content_node

EPS = 1e-9


@dataclass(frozen=True)
class RegistrySpec:
    """Resource and price footprint of one service registry instance."""

    cpu_demand: float = 50.0
    container_overhead: float = 20.0
    run_cost: float = 5.0
    deploy_cost: float = 50.0

    @property
    def footprint(self) -> float:
        return self.cpu_demand + self.container_overhead


@dataclass
class OrchestratorState:
    failed_set: set[str] = field(default_factory=set)
    registry_nodes: set[str] = field(default_factory=set)
    deployed_instances: set[tuple[str, str]] = field(default_factory=set)
    k_paths: int = 4
    probe_period: float = 1000.0  # ms between health-check rounds
    registry: RegistrySpec = field(default_factory=RegistrySpec)
    reuse: bool = True
    sticky_failures: bool = False
    include_registry_cost: bool = False
    registry_aggregation: str = "sum"
    clock: float = 0.0
    assigned_load: dict[str, float] = field(default_factory=dict)

    @classmethod
    def initialize(cls, topology: Topology, **settings) -> "OrchestratorState":
        state = cls(**settings)
        state.failed_set = topology.failed_nodes()
        state.registry_nodes = set(topology.registry_nodes(alive_only=False))
        if not state.registry_nodes:
            raise ValueError("topology has no service registry")
        return state

    def alive_registries(self, topology: Topology) -> list[str]:
        return sorted(r for r in self.registry_nodes if not topology.nodes[r].failed)


@dataclass(frozen=True)
class NodeProbe:
    target: str
    acked: bool


@dataclass
class PathCandidate:
    path: Path
    placement: Placement | None = None
    cost: CostBreakdown | None = None
    delay: float = math.inf
    new_registry: str | None = None
    rejected_because: str | None = None  # "capacity", "delay" or "route"
    loads: dict[str, float] = field(default_factory=dict)


@dataclass
class PlacementDecision:
    placement: Placement
    path: Path
    cost: CostBreakdown
    delay: float
    new_registry: str | None
    candidates: list[PathCandidate]


def path_registry_delay(topology: Topology, path: Path, registry: str,
                        aggregation: str = "sum", view: RoutingView | None = None) -> float:
    """Delay between a path and one registry, aggregated over the path's nodes."""
    view = view or RoutingView(topology)
    per_node = [view.delay(n, registry) for n in path.nodes]
    if aggregation == "sum":
        return math.fsum(per_node)
    if aggregation == "max":
        return max(per_node)
    raise ValueError(f"unknown aggregation {aggregation!r}")


def registry_decision(state: OrchestratorState, topology: Topology, path: Path,
                      delay_threshold: float, view: RoutingView | None = None) -> bool:
    """True when some registry is more than ``delay_threshold`` away from the path.

    The path-to-registry distance aggregates each path node's shortest alive
    delay to the registry with ``state.registry_aggregation`` (sum or max).
    A failed registry always counts as too far.
    """
    view = view or RoutingView(topology)
    for reg in sorted(state.registry_nodes):
        if topology.nodes[reg].failed:
            return True
        if path_registry_delay(topology, path, reg, state.registry_aggregation, view) > delay_threshold:
            return True
    return False


def _satisfies_delay(view, node, placement, request, topology, catalog, delay_threshold):
    """``node`` is within the threshold of every host, and C2 holds with a registry on it."""
    hosts = sorted(placement.hosts)
    if max(view.delay(node, h) for h in hosts) > delay_threshold:
        return False
    trial = replace(placement, registry_nodes=placement.registry_nodes | {node})
    try:
        return e2e_delay(trial, request, topology, catalog, view) <= delay_threshold + EPS
    except EvaluationError:
        return False


def _registry_site(state, topology, placement, request, catalog, residual, delay_threshold, view):
    """First neighbour of the placement's hosts that can take a registry.

    Returns (site, is_new); (None, False) when no neighbour qualifies.  A
    qualifying neighbour that already runs a registry means nothing new is
    deployed.
    """
    hosts = sorted(placement.hosts)
    around = sorted({nb for h in hosts for nb in topology.neighbors(h, alive_only=True)})
    for node_id in around:
        node = topology.nodes[node_id]
        if not node.can_host:
            continue
        existing = node_id in state.registry_nodes
        if not existing and residual.get(node_id, node.residual) + EPS < state.registry.footprint:
            continue
        if _satisfies_delay(view, node_id, placement, request, topology, catalog, delay_threshold):
            return node_id, not existing
    return None, False


def _greedy_fill(state, topology, request, catalog, path):
    """Assign components in order to the best-ranked path node with room."""
    ranks = rank_nodes(topology, path)
    order = sorted(ranks, key=lambda n: (-round(ranks[n], 12), n))
    residual = {n: topology.nodes[n].residual for n in order}
    hosts, loads = {}, {}
    for comp in components_of(request, catalog):
        spec = catalog.component(comp)
        for node in order:
            reused = state.reuse and (comp, node) in state.deployed_instances
            need = 0.0 if reused else spec.footprint
            if residual[node] + EPS >= need:
                residual[node] -= need
                loads[node] = loads.get(node, 0.0) + need
                hosts[comp] = node
                break
        else:
            return None, residual, loads
    return hosts, residual, loads


def evaluate_paths(state: OrchestratorState, topology: Topology, request: ServiceRequest,
                   catalog: Catalog, delay_threshold: float) -> list[PathCandidate]:
    """Greedy placement and cost for each of the K candidate paths, in path order."""
    view = RoutingView(topology)
    source = select_content_node(request, topology)
    if source is None or topology.nodes[request.end_user].failed:
        return []
    paths = k_shortest_paths(topology, source, request.end_user, delay_threshold, state.k_paths)
    registries = state.alive_registries(topology)
    candidates = []
    for path in paths:
        cand = PathCandidate(path)
        candidates.append(cand)
        hosts, residual, loads = _greedy_fill(state, topology, request, catalog, path)
        if hosts is None:
            cand.rejected_because = "capacity"
            continue
        try:
            placement = route_placement(topology, request, catalog, hosts, registries=registries,
                                        content_node=source, view=view)
        except EvaluationError:
            cand.rejected_because = "route"
            continue
        cost = evaluate_cost(placement, request, topology, catalog,
                             state.deployed_instances, state.reuse)
        new_site = None
        if registry_decision(state, topology, path, delay_threshold, view):
            site, is_new = _registry_site(state, topology, placement, request, catalog,
                                          residual, delay_threshold, view)
            if site is not None and is_new:
                new_site = site
                placement.registry_nodes = frozenset(registries) | {site}
                loads[site] = loads.get(site, 0.0) + state.registry.footprint
                if state.include_registry_cost:
                    cost = cost + CostBreakdown(state.registry.run_cost, state.registry.deploy_cost)
        try:
            delay = e2e_delay(placement, request, topology, catalog, view)
        except EvaluationError:
            cand.rejected_because = "delay"
            continue
        cand.placement, cand.cost, cand.delay = placement, cost, delay
        cand.new_registry, cand.loads = new_site, loads
        if delay > delay_threshold + EPS:
            cand.rejected_because = "delay"
    return candidates


def place_request(state: OrchestratorState, topology: Topology, request: ServiceRequest,
                  catalog: Catalog, delay_threshold: float) -> PlacementDecision | None:
    """Place one request, commit it to the state and topology; None means rejected."""
    candidates = evaluate_paths(state, topology, request, catalog, delay_threshold)
    best = None
    for cand in candidates:
        if cand.rejected_because is None and (best is None or cand.cost.total < best.cost.total):
            best = cand
    if best is None:
        return None
    for node_id, need in best.loads.items():
        node = topology.nodes[node_id]
        node.residual = max(0.0, node.residual - need)
        state.assigned_load[node_id] = state.assigned_load.get(node_id, 0.0) + need
    state.deployed_instances |= instances_of(best.placement)
    if best.new_registry is not None:
        state.registry_nodes.add(best.new_registry)
        topology.nodes[best.new_registry].hosts_registry = True
    return PlacementDecision(best.placement, best.path, best.cost, best.delay,
                             best.new_registry, candidates)


def failure_tick(state: OrchestratorState, topology: Topology,
                 probes: Sequence[NodeProbe]) -> tuple[OrchestratorState, bool]:
    """Fold one round of health-check results into the failed set.

    Returns the state and whether the failed set changed (the placement
    manager is notified when it did).
    """
    for probe in probes:
        topology.node(probe.target)
    before = set(state.failed_set)
    for probe in probes:
        if not probe.acked:
            set_failed(topology, probe.target, True)
            state.failed_set.add(probe.target)
        elif probe.target in state.failed_set and not state.sticky_failures:
            set_failed(topology, probe.target, False)
            state.failed_set.discard(probe.target)
    state.clock += state.probe_period
    return state, state.failed_set != before


@dataclass
class RequestOutcome:
    request_id: str
    accepted: bool
    placement: Placement | None = None
    path: Path | None = None
    cost: CostBreakdown = field(default_factory=CostBreakdown)
    delay: float = math.nan
    registry_delay: float = math.nan  # mean over the chain's microservices
    wall_time: float = 0.0  # ms
    failed_nodes: tuple[str, ...] = ()
    notified: bool = False
    new_registry: str | None = None


def run_scenario(state: OrchestratorState, topology: Topology, requests: Sequence[ServiceRequest],
                 catalog: Catalog, delay_threshold: float,
                 failure_schedule: Mapping[int, Sequence[NodeProbe]] | None = None) -> list[RequestOutcome]:
    """Process requests in order, applying scheduled probe batches before each one.

    ``failure_schedule`` maps a request index to the probe batch delivered
    just before that request arrives.
    """
    failure_schedule = failure_schedule or {}
    outcomes = []
    for i, req in enumerate(requests):
        notified = False
        if i in failure_schedule:
            _, notified = failure_tick(state, topology, failure_schedule[i])
        started = time.perf_counter()
        decision = place_request(state, topology, req, catalog, delay_threshold)
        elapsed = (time.perf_counter() - started) * 1e3
        out = RequestOutcome(req.id, decision is not None, wall_time=elapsed,
                             failed_nodes=tuple(sorted(state.failed_set)), notified=notified)
        if decision is not None:
            out.placement, out.path = decision.placement, decision.path
            out.cost, out.delay = decision.cost, decision.delay
            out.new_registry = decision.new_registry
            out.registry_delay = mean_registry_delay(decision.placement, req, RoutingView(topology))
        outcomes.append(out)
    return outcomes
