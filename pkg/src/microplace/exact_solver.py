"""Exact joint placement by depth-first branch and bound, plus a brute-force oracle.

Every virtual edge is routed on the minimum link-cost alive path between its
endpoint hosts, so the search only decides component -> host assignments.
Registries are taken from the topology's registry flags; available capacity
is each node's ``residual``.
"""

from __future__ import annotations

import itertools
import operator
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cost_model import (CostBreakdown, EvaluationError, Placement, RoutingView, e2e_delay,
                         evaluate_cost, instances_of, route_placement)
from .topology import Topology
from .workload import Catalog, ServiceRequest, components_of, select_content_node

EPS = 1e-9
BRUTE_FORCE_LIMIT = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass
class SolverResult:
    placements: dict[str, Placement] | None
    cost: CostBreakdown = field(default_factory=CostBreakdown)
    nodes_explored: int = 0
    wall_time: float = 0.0  # ms
    proven: bool = True
    incumbent_trace: list[float] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.placements is not None

    @property
    def status(self) -> str:
        if self.feasible:
            return "optimal" if self.proven else "budget"
        return "infeasible" if self.proven else "budget_no_solution"


def _evaluate_joint(topology, requests, catalog, hosts_by_request, view, reuse, already_deployed):
    registries = topology.registry_nodes()
    deployed = set(already_deployed)
    placements, parts = {}, []
    for req in requests:
        placement = route_placement(topology, req, catalog, hosts_by_request[req.id],
                                    registries=registries, view=view)
        parts.append(evaluate_cost(placement, req, topology, catalog, deployed, reuse))
        deployed |= instances_of(placement)
        placements[req.id] = placement
    return placements, CostBreakdown.sum(parts)


@dataclass
class _Slot:
    request: int
    component: str
    is_db: bool
    pos: int           # chain position of the microservice (of the owner, for databases)
    prev: int          # slot of the previous chain microservice, -1 for the first
    owner: int         # slot of the owning microservice (databases only)
    last: bool         # last microservice of its chain
    footprint: float
    run_cost: float
    deploy_cost: float
    processing: float = 0.0
    lifecycle: dict = field(default_factory=dict)


def solve_exact(topology: Topology, requests: Sequence[ServiceRequest], catalog: Catalog,
                delay_threshold: float, budget: int = 1_000_000, reuse: bool = True,
                already_deployed: Iterable[tuple[str, str]] = (),
                host_order: Sequence[str] | None = None,
                incumbent: Mapping[str, Mapping[str, str]] | None = None) -> SolverResult:
    """Minimum total cost joint placement of ``requests`` (or infeasible).

    ``budget`` caps node expansions; when it runs out the best incumbent is
    returned with ``proven=False``.  ``host_order`` only changes the
    tie-breaking order among equally cheap candidate hosts.  ``incumbent``
    (request id -> component -> host) seeds the search with a known
    placement; it is ignored when infeasible.

    The pruning bound adds to the accumulated cost: one license per component
    type that has no instance yet, and a per-request shortest-chain relaxation
    (capacity and delay dropped) in which a host lacking an instance of an
    already instantiated type costs that type's license split over all of its
    slots.
    """
    started = time.perf_counter()
    view = RoutingView(topology)
    already_deployed = frozenset(already_deployed)
    result = SolverResult(placements=None)
    if not requests:
        result.placements = {}
        result.wall_time = (time.perf_counter() - started) * 1e3
        return result

    hosts = topology.hosting_nodes(alive_only=True)
    if host_order is not None:
        rank = {h: i for i, h in enumerate(host_order)}
        hosts.sort(key=lambda h: (rank.get(h, len(rank)), h))
    H = len(hosts)
    idx = {h: i for i, h in enumerate(hosts)}
    kind = {h: topology.nodes[h].kind for h in hosts}
    capacity = {h: topology.nodes[h].residual for h in hosts}
    registries = topology.registry_nodes()
    reg = {h: view.registry_delay(h, registries) for h in hosts}

    sources, users = [], []
    for req in requests:
        z = select_content_node(req, topology)
        if z is None or topology.nodes[req.end_user].failed:
            result.wall_time = (time.perf_counter() - started) * 1e3
            return result
        sources.append(z)
        users.append(req.end_user)

    points = sorted(set(hosts) | set(sources) | set(users))
    beta, dly, mind = {}, {}, {}
    for a in points:
        for b in points:
            p = view.cost_path(a, b)
            beta[a, b] = math.inf if p is None else p.cost
            dly[a, b] = math.inf if p is None else p.delay
            mind[a, b] = view.delay(a, b)
    B = np.array([[beta[a, b] for b in hosts] for a in hosts])
    Bz = [np.array([beta[z, h] for h in hosts]) for z in sources]
    Bu = [np.array([beta[h, u] for h in hosts]) for u in users]

    slots: list[_Slot] = []
    chains: list[list[tuple[str, str | None]]] = []  # per request: (microservice, database or None)
    for r, req in enumerate(requests):
        prev = -1
        owner_slot = {}
        chain = []
        for comp in components_of(req, catalog):
            spec = catalog.component(comp)
            if catalog.is_database(comp):
                owner = owner_slot[spec.owner_microservice]
                slots.append(_Slot(r, comp, True, slots[owner].pos, -1, owner, False,
                                   spec.footprint, spec.run_cost, spec.deploy_cost))
                chain[-1] = (chain[-1][0], comp)
            else:
                slots.append(_Slot(r, comp, False, len(chain), prev, -1, comp == req.last,
                                   spec.footprint, spec.run_cost, spec.deploy_cost,
                                   spec.processing_delay,
                                   {h: spec.lifecycle_delay(kind[h]) for h in hosts}))
                chain.append((comp, None))
                prev = owner_slot[comp] = len(slots) - 1
        chains.append(chain)
    n = len(slots)

    # remaining-delay lower bound of each request after slot i
    ms_floor = [0.0] * n
    for i, s in enumerate(slots):
        if not s.is_db:
            ms_floor[i] = s.processing + min((s.lifecycle[h] + reg[h] for h in hosts), default=math.inf)
    delay_after = [0.0] * n
    for i in range(n - 1, -1, -1):
        nxt = i + 1
        same = nxt < n and slots[nxt].request == slots[i].request
        delay_after[i] = (ms_floor[nxt] + delay_after[nxt]) if same else 0.0
    for r in range(len(requests)):
        first = next(i for i, s in enumerate(slots) if s.request == r)
        if ms_floor[first] + delay_after[first] + mind[sources[r], users[r]] > delay_threshold + EPS:
            result.wall_time = (time.perf_counter() - started) * 1e3
            return result
    # license lower bound: distinct component types still to place
    types_after: list[frozenset[str]] = [frozenset()] * n
    deploy_after = [0.0] * (n + 1)
    pending: set[str] = set()
    for i in range(n - 1, -1, -1):
        types_after[i] = frozenset(pending)
        pending.add(slots[i].component)
        deploy_after[i] = deploy_after[i + 1] + slots[i].deploy_cost
    type_cost = {s.component: s.deploy_cost for s in slots}

    # a new instance serves at most every slot of its type, so each slot is
    # charged that share of the license
    slots_of_type: dict[str, int] = {}
    for s in slots:
        slots_of_type[s.component] = slots_of_type.get(s.component, 0) + 1
    share = {t: type_cost[t] / k for t, k in slots_of_type.items()}
    request_types = [tuple(sorted({t for pair in ch for t in pair if t})) for ch in chains]
    type_index = {t: k for k, t in enumerate(sorted(type_cost))}
    sig_of = [operator.itemgetter(*[type_index[t] for t in ts], 0) for ts in request_types]

    assign: list[str | None] = [None] * n
    load = dict.fromkeys(hosts, 0.0)
    refs: dict[tuple[str, str], int] = {}
    type_count: dict[str, int] = {}
    mask: dict[str, int] = dict.fromkeys(type_cost, 0)  # hosts running an instance, as bits
    for comp, node in already_deployed:
        type_count[comp] = type_count.get(comp, 0) + 1
        if comp in mask and node in idx:
            mask[comp] |= 1 << idx[node]
    # per type: instance bitmask, or -1 while the type has no instance at all
    sig = [mask[t] if type_count.get(t) else -1 for t in sorted(type_cost)]
    req_delay = [0.0] * len(requests)
    # operational cost is the same for every complete placement, so the
    # search works on deployment + communication only
    best = {"cost": math.inf, "assign": None}
    explored = 0
    aborted = False

    missing_vec: dict[int, np.ndarray] = {}

    def charge(t, skip):
        if not reuse or t == skip or not type_count.get(t):
            return 0.0
        bits = mask[t]
        vec = missing_vec.get(bits)
        if vec is None:
            vec = missing_vec[bits] = np.array([0.0 if bits >> k & 1 else 1.0 for k in range(H)])
        return share[t] * vec

    ctg_cache: dict[tuple, tuple] = {}

    def cost_to_go(r, skip):
        """(node_cost, g): g[j][h] is the cheapest relaxed completion of request r
        after its position j sits on h; node_cost[j] prices position j itself."""
        key = (r, skip if skip in request_types[r] else None, sig_of[r](sig))
        hit = ctg_cache.get(key)
        if hit is not None:
            return hit
        chain = chains[r]
        node_cost = []
        for ms, db in chain:
            c = charge(ms, skip) + np.zeros(H)
            if db is not None:
                c = c + (B + charge(db, skip)).min(axis=1)
            node_cost.append(c)
        g = [None] * len(chain)
        g[-1] = Bu[r]
        for j in range(len(chain) - 2, -1, -1):
            g[j] = (B + (node_cost[j + 1] + g[j + 1])).min(axis=1)
        ctg_cache[key] = hit = (node_cost, g, float((Bz[r] + node_cost[0] + g[0]).min()))
        return hit

    def future_bound(r, skip):
        return cost_to_go(r, skip)[2]

    def license_floor(i):
        if not reuse:
            return deploy_after[i + 1]
        return math.fsum(type_cost[t] for t in types_after[i] if not type_count.get(t))

    def option(i, h):
        s = slots[i]
        r = s.request
        z, u = sources[r], users[r]
        if s.is_db:
            anchor = assign[s.owner]
            comm = beta[anchor, h]
            d = dly[anchor, h]
            tail_from = None if slots[s.owner].last else anchor
        else:
            if reg[h] == math.inf:
                return None
            anchor = z if s.prev < 0 else assign[s.prev]
            comm = beta[anchor, h]
            d = dly[anchor, h] + s.processing + s.lifecycle[h] + reg[h]
            if s.last:
                comm += beta[h, u]
                d += dly[h, u]
            tail_from = None if s.last else h
        if comm == math.inf:
            return None
        pair = (s.component, h)
        fresh = not reuse or (pair not in already_deployed and not refs.get(pair))
        need = s.footprint if fresh else 0.0
        if load[h] + need > capacity[h] + EPS:
            return None
        tail_delay = mind[tail_from, u] if tail_from is not None else 0.0
        if req_delay[r] + d + delay_after[i] + tail_delay > delay_threshold + EPS:
            return None
        inc = comm + (s.deploy_cost if fresh else 0.0)
        return inc, fresh, need, d

    def push(i, h, need, d):
        s = slots[i]
        pair = (s.component, h)
        assign[i] = h
        load[h] += need
        refs[pair] = refs.get(pair, 0) + 1
        type_count[s.component] = type_count.get(s.component, 0) + 1
        mask[s.component] |= 1 << idx[h]
        sig[type_index[s.component]] = mask[s.component]
        req_delay[s.request] += d

    def pop(i, h, need, d, old_mask):
        s = slots[i]
        pair = (s.component, h)
        req_delay[s.request] -= d
        mask[s.component] = old_mask
        type_count[s.component] -= 1
        sig[type_index[s.component]] = old_mask if type_count[s.component] else -1
        refs[pair] -= 1
        load[h] -= need
        assign[i] = None

    def record(acc):
        if acc < best["cost"] - EPS:
            best["cost"] = acc
            best["assign"] = list(assign)
            result.incumbent_trace.append(acc)

    def descend(i, acc):
        nonlocal explored, aborted
        if i == n:
            record(acc)
            return
        s = slots[i]
        r = s.request
        options = []
        for h in hosts:
            opt = option(i, h)
            if opt is not None:
                options.append((opt[0], idx[h], h) + opt[1:])
        if not options:
            return
        options.sort()
        floor = license_floor(i)
        if reuse and not type_count.get(s.component) and s.component in types_after[i]:
            fresh_floor = floor - type_cost[s.component]
        else:
            fresh_floor = floor
        later = math.fsum(future_bound(q, s.component) for q in range(r + 1, len(requests)))
        node_cost, g, _ = cost_to_go(r, s.component)
        for inc, k, h, fresh, need, d in options:
            if s.is_db:
                owner_pos = slots[s.owner].pos
                rest = 0.0 if slots[s.owner].last else g[owner_pos][idx[assign[s.owner]]]
            else:
                db = chains[r][s.pos][1]
                rest = 0.0 if s.last else g[s.pos][k]
                if db is not None:
                    rest += float((B[k] + charge(db, s.component)).min())
            first_of_type = fresh and reuse and not type_count.get(s.component)
            bound = acc + inc + (fresh_floor if first_of_type else floor) + rest + later
            if bound >= best["cost"] - EPS:
                continue
            if explored >= budget:
                aborted = True
                return
            explored += 1
            old = mask[s.component]
            push(i, h, need, d)
            descend(i + 1, acc + inc)
            pop(i, h, need, d, old)
            if aborted:
                return

    if incumbent is not None:
        trail = []
        acc = 0.0
        for i, s in enumerate(slots):
            h = incumbent.get(requests[s.request].id, {}).get(s.component)
            opt = option(i, h) if h in idx else None
            if opt is None:
                break
            trail.append((i, h, opt[2], opt[3], mask[s.component]))
            push(i, h, opt[2], opt[3])
            acc += opt[0]
        else:
            record(acc)
        for i, h, need, d, old in reversed(trail):
            pop(i, h, need, d, old)

    descend(0, 0.0)

    result.nodes_explored = explored
    result.proven = not aborted
    if best["assign"] is not None:
        by_request: dict[str, dict[str, str]] = {req.id: {} for req in requests}
        for s, h in zip(slots, best["assign"]):
            by_request[requests[s.request].id][s.component] = h
        result.placements, result.cost = _evaluate_joint(
            topology, requests, catalog, by_request, view, reuse, already_deployed)
    result.wall_time = (time.perf_counter() - started) * 1e3
    return result


def solve_brute(topology: Topology, requests: Sequence[ServiceRequest], catalog: Catalog,
                delay_threshold: float, reuse: bool = True,
                already_deployed: Iterable[tuple[str, str]] = (),
                limit: int = BRUTE_FORCE_LIMIT) -> SolverResult:
    """Enumerate every component -> host assignment and keep the cheapest feasible one."""
    started = time.perf_counter()
    already_deployed = frozenset(already_deployed)
    hosts = topology.hosting_nodes(alive_only=True)
    slots = [(req, comp) for req in requests for comp in components_of(req, catalog)]
    size = len(hosts) ** len(slots)
    if size > limit:
        raise InstanceTooLarge(f"{len(hosts)}^{len(slots)} = {size} assignments exceeds {limit}")
    result = SolverResult(placements=None)
    if not requests:
        result.placements = {}
        result.wall_time = (time.perf_counter() - started) * 1e3
        return result
    view = RoutingView(topology)
    registries = topology.registry_nodes()
    capacity = {h: topology.nodes[h].residual for h in hosts}
    best_total = math.inf
    for combo in itertools.product(hosts, repeat=len(slots)):
        result.nodes_explored += 1
        instances: dict[tuple[str, str], int] = {}
        for (req, comp), h in zip(slots, combo):
            instances[(comp, h)] = instances.get((comp, h), 0) + 1
        load = dict.fromkeys(hosts, 0.0)
        for (comp, h), count in instances.items():
            fresh = count if not reuse else (0 if (comp, h) in already_deployed else 1)
            load[h] += fresh * catalog.component(comp).footprint
        if any(load[h] > capacity[h] + EPS for h in hosts):
            continue
        by_request: dict[str, dict[str, str]] = {req.id: {} for req in requests}
        for (req, comp), h in zip(slots, combo):
            by_request[req.id][comp] = h
        try:
            placements = {req.id: route_placement(topology, req, catalog, by_request[req.id],
                                                  registries=registries, view=view)
                          for req in requests}
            if any(e2e_delay(placements[req.id], req, topology, catalog, view) > delay_threshold + EPS
                   for req in requests):
                continue
        except EvaluationError:
            continue
        deployed = set(already_deployed)
        parts = []
        for req in requests:
            parts.append(evaluate_cost(placements[req.id], req, topology, catalog, deployed, reuse))
            deployed |= instances_of(placements[req.id])
        cost = CostBreakdown.sum(parts)
        if cost.total < best_total - EPS:
            best_total = cost.total
            result.placements, result.cost = placements, cost
    result.wall_time = (time.perf_counter() - started) * 1e3
    return result
