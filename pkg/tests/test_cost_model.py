import dataclasses
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microplace.cost_model import (CostBreakdown, EvaluationError, Placement, check_feasible,
                                   communication_cost, deployment_cost, e2e_delay, evaluate_cost,
                                   instances_of, operational_cost, route_placement)
from microplace.harness.oracle import small_instance
from microplace.harness.reference import build_reference_topology
from microplace.topology import NodeKind, PhysicalLink, PhysicalNode, Topology
from microplace.workload import Catalog, ServiceRequest, components_of, virtual_edges_of

from conftest import db, ms, reference_inputs


def random_hosts(rng, topology, request, catalog):
    hosts = topology.hosting_nodes()
    return {c: hosts[int(rng.integers(len(hosts)))] for c in components_of(request, catalog)}


def link_sum(topology, nodes, attr):
    # walks the raw link table, not Path's cached totals
    return sum(getattr(topology.links[tuple(sorted(pq))], attr) for pq in zip(nodes, nodes[1:]))


def six_terms(placement, request, topology, catalog):
    g = nx.Graph()
    g.add_nodes_from(n for n, node in topology.nodes.items() if not node.failed)
    g.add_weighted_edges_from((a, b, l.delay) for (a, b), l in topology.links.items()
                              if a in g and b in g)
    routes = [placement.edge_route[e] for e in virtual_edges_of(request, catalog)]
    total = sum(link_sum(topology, r.nodes, "delay") for r in routes)
    total += link_sum(topology, placement.ingress.nodes, "delay")
    total += link_sum(topology, placement.egress.nodes, "delay")
    for m in request.chain:
        h = placement.component_host[m]
        spec = catalog.microservices[m]
        kind = topology.nodes[h].kind
        total += spec.processing_delay + spec.container_create[kind] + spec.container_release[kind]
        dist = nx.single_source_dijkstra_path_length(g, h)
        total += min(dist[r] for r in placement.registry_nodes if r in dist)
    return total


# --- hand-sized examples -------------------------------------------------------------

def pair_topology(beta=4.0, delay=3.0):
    nodes = [PhysicalNode("x", NodeKind.EDGE_SERVER, 1000, hosts_registry=True),
             PhysicalNode("y", NodeKind.EDGE_SERVER, 1000),
             PhysicalNode("u", NodeKind.END_USER), PhysicalNode("z", NodeKind.CONTENT_GENERATOR)]
    links = [PhysicalLink("x", "y", delay, beta), PhysicalLink("z", "x", 1, 1), PhysicalLink("u", "x", 1, 1)]
    return Topology.build(nodes, links)


def test_operational_examples():
    cat = Catalog.from_specs([ms("A", run=5)], [])
    p = Placement("q", {"A": "x"}, {}, None, None)
    assert operational_cost(p, ServiceRequest("q", "u", ("z",), ("A",)), cat) == 5
    cat = Catalog.from_specs([ms("A", run=5), ms("B", run=3, db=True)], [db("B", run=2)])
    p = Placement("q", {"A": "x", "B": "x", "db_B": "y"}, {}, None, None)
    assert operational_cost(p, ServiceRequest("q", "u", ("z",), ("A", "B")), cat) == 10


def test_uncovered_component_is_an_error():
    cat = Catalog.from_specs([ms("A"), ms("B")], [])
    with pytest.raises(EvaluationError):
        operational_cost(Placement("q", {"A": "x"}, {}, None, None),
                         ServiceRequest("q", "u", ("z",), ("A", "B")), cat)


def test_deployment_examples():
    cat = Catalog.from_specs([ms("A"), ms("B")], [])
    req = ServiceRequest("q", "u", ("z",), ("A", "B"))
    p = Placement("q", {"A": "x", "B": "y"}, {}, None, None)
    assert deployment_cost(p, req, cat) == 200
    assert deployment_cost(p, req, cat, {("A", "x"), ("B", "y")}) == 0
    assert deployment_cost(p, req, cat, {("A", "y")}) == 200


def test_communication_examples():
    topo = pair_topology()
    cat = Catalog.from_specs([ms("A"), ms("B")], [])
    one = ServiceRequest("q", "x", ("x",), ("A",))
    p = Placement("q", {"A": "x"}, {}, topo.make_path(["x"]), topo.make_path(["x"]))
    assert communication_cost(p, one, topo, cat) == 0
    two = ServiceRequest("q", "y", ("x",), ("A", "B"))
    p = route_placement(topo, two, cat, {"A": "x", "B": "y"}, content_node="x")
    assert communication_cost(p, two, topo, cat) == 4


def test_delay_examples_4_and_7():
    topo = pair_topology(delay=3.0)
    cat = Catalog.from_specs([ms("A", p=2, create=1, release=1)], [])
    req = ServiceRequest("q", "x", ("x",), ("A",))
    here = Placement("q", {"A": "x"}, {}, topo.make_path(["x"]), topo.make_path(["x"]), frozenset({"x"}))
    assert e2e_delay(here, req, topo, cat) == 4
    away = dataclasses.replace(here, registry_nodes=frozenset({"y"}))
    assert e2e_delay(away, req, topo, cat) == 7


def test_no_registry_reachable():
    topo = pair_topology()
    topo.nodes["y"].failed = True
    cat = Catalog.from_specs([ms("A")], [])
    req = ServiceRequest("q", "x", ("x",), ("A",))
    p = Placement("q", {"A": "x"}, {}, topo.make_path(["x"]), topo.make_path(["x"]), frozenset({"y"}))
    with pytest.raises(EvaluationError):
        e2e_delay(p, req, topo, cat)


# --- term-by-term oracles on generated instances -----------------------------------

def test_operational_seed3_oracle():
    topo, cat, reqs = reference_inputs(3, 12)
    req = next(r for r in reqs if len(r.chain) == 4)
    p = route_placement(topo, req, cat, random_hosts(np.random.default_rng(3), topo, req, cat))
    want = sum(cat.microservices[m].run_cost for m in req.chain)
    want += sum(cat.database_of(m).run_cost for m in req.chain if cat.database_of(m))
    assert operational_cost(p, req, cat) == pytest.approx(want, rel=1e-12)


def test_deployment_seed11_set_difference():
    rng = np.random.default_rng(11)
    topo, cat, reqs = reference_inputs(11, 6)
    deployed = set()
    for req in reqs:
        p = route_placement(topo, req, cat, random_hosts(rng, topo, req, cat))
        want = sum(cat.component(c).deploy_cost for c, h in p.component_host.items() if (c, h) not in deployed)
        assert deployment_cost(p, req, cat, deployed) == want
        deployed |= instances_of(p)


def test_communication_seed5_link_by_link():
    rng = np.random.default_rng(5)
    topo, cat, reqs = reference_inputs(5, 8)
    for req in reqs:
        p = route_placement(topo, req, cat, random_hosts(rng, topo, req, cat))
        want = sum(link_sum(topo, r.nodes, "cost") for r in p.routes())
        assert communication_cost(p, req, topo, cat) == pytest.approx(want, rel=1e-12)


def test_e2e_seed5_six_terms():
    rng = np.random.default_rng(5)
    topo, cat, reqs = reference_inputs(5, 8)
    for req in reqs:
        p = route_placement(topo, req, cat, random_hosts(rng, topo, req, cat), registries=["cloud", "es2"])
        assert e2e_delay(p, req, topo, cat) == pytest.approx(six_terms(p, req, topo, cat), rel=1e-12)


def test_costs_additive_over_requests():
    rng = np.random.default_rng(2)
    topo, cat, reqs = reference_inputs(2, 10)
    placements = [route_placement(topo, r, cat, random_hosts(rng, topo, r, cat)) for r in reqs]
    deployed, parts = set(), []
    for p, r in zip(placements, reqs):
        parts.append(evaluate_cost(p, r, topo, cat, deployed))
        deployed |= instances_of(p)
    joint = CostBreakdown.sum(parts)
    assert joint.total == pytest.approx(sum(x.total for x in parts), rel=1e-12)
    assert joint.deployment == sum(cat.component(c).deploy_cost for c, _ in deployed)


# --- beta scaling and monotonicity ----------------------------------------------------

def scaled(topology, beta=1.0, delay=1.0):
    out = topology.copy()
    out.links = {k: dataclasses.replace(l, cost=l.cost * beta, delay=l.delay * delay)
                 for k, l in topology.links.items()}
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.sampled_from([0.5, 2.0, 3.0, 10.0, 0.25]))
def test_beta_scaling(seed, c):
    rng = np.random.default_rng(seed)
    topo, cat, reqs = reference_inputs(seed % 50, 3)
    big = scaled(topo, beta=c)
    for req in reqs:
        p = route_placement(topo, req, cat, random_hosts(rng, topo, req, cat))
        q = route_placement(big, req, cat, p.component_host, content_node=p.content_node)
        assert communication_cost(q, req, big, cat) == pytest.approx(c * communication_cost(p, req, topo, cat), rel=1e-12)
        assert e2e_delay(q, req, big, cat) == pytest.approx(e2e_delay(p, req, topo, cat), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), grow=st.floats(1.0, 3.0))
def test_delay_monotone_in_link_delays_and_parameters(seed, grow):
    rng = np.random.default_rng(seed)
    topo, cat, reqs = reference_inputs(seed % 50, 2)
    slow = scaled(topo, delay=grow)
    slow_cat = Catalog.from_specs(
        [dataclasses.replace(m, processing_delay=m.processing_delay * grow,
                             container_create={k: v * grow for k, v in m.container_create.items()},
                             container_release={k: v * grow for k, v in m.container_release.items()})
         for m in cat.microservices.values()], cat.databases.values())
    for req in reqs:
        p = route_placement(topo, req, cat, random_hosts(rng, topo, req, cat))
        q = dataclasses.replace(p, edge_route={e: slow.make_path(r.nodes) for e, r in p.edge_route.items()},
                                ingress=slow.make_path(p.ingress.nodes), egress=slow.make_path(p.egress.nodes))
        assert e2e_delay(q, req, slow, slow_cat) >= e2e_delay(p, req, topo, cat) - 1e-9


# --- feasibility checker against an independent constraint oracle -------------------

def test_check_feasible_vacuous():
    assert check_feasible({}, [], build_reference_topology(), Catalog.from_specs([], []), 10).feasible


def test_capacity_violation_names_node():
    topo = build_reference_topology()
    cat = Catalog.from_specs([ms("A", cpu=280, overhead=20)], [])
    req = ServiceRequest("q", "eu1", ("cn3",), ("A",))
    p = route_placement(topo, req, cat, {"A": "nd1"})
    verdict = check_feasible([p], [req], topo, cat, 1e5)
    assert [(v.constraint, v.subject) for v in verdict.violations] == [("capacity", "nd1")]


def constraint_oracle(placements, requests, topology, catalog, threshold):
    """Independent C1/C2/mapping check returning the set of violated constraint kinds."""
    bad = set()
    used = set()
    for req in requests:
        p = placements[req.id]
        hosts = p.component_host
        if set(hosts) != set(components_of(req, catalog)) or any(
                topology.nodes[h].failed or not topology.nodes[h].can_host for h in hosts.values()):
            bad.add("mapping")
            continue
        ends = [(p.ingress, p.ingress.nodes[0], hosts[req.chain[0]]), (p.egress, hosts[req.chain[-1]], req.end_user)]
        ends += [(p.edge_route[(a, b)], hosts[a], hosts[b]) for a, b in virtual_edges_of(req, catalog)]
        if p.ingress.nodes[0] not in req.content_nodes or any(
                r.nodes[0] != s or r.nodes[-1] != t or any(topology.nodes[n].failed for n in r.nodes)
                for r, s, t in ends):
            bad.add("mapping")
            continue
        used |= set(hosts.items())
        try:
            if six_terms(p, req, topology, catalog) > threshold:
                bad.add("delay")
        except ValueError:
            bad.add("delay")
    load = {}
    for c, h in used:
        load[h] = load.get(h, 0) + catalog.component(c).cpu_demand + catalog.component(c).container_overhead
    if any(v > topology.nodes[h].capacity + 1e-9 for h, v in load.items()):
        bad.add("capacity")
    return bad


def test_check_feasible_seed13_matches_oracle():
    rng = np.random.default_rng(13)
    for trial in range(40):
        inst = small_instance(13 + trial)
        reqs, topo, cat = inst.requests, inst.topology, inst.catalog
        placements = {r.id: route_placement(topo, r, cat, random_hosts(rng, topo, r, cat)) for r in reqs}
        if trial % 3 == 0:
            victim = sorted(placements[reqs[0].id].hosts)[0]
            topo.nodes[victim].failed = True
        verdict = check_feasible(placements, reqs, topo, cat, inst.delay_threshold)
        want = constraint_oracle(placements, reqs, topo, cat, inst.delay_threshold)
        assert {v.constraint for v in verdict.violations} == want


def test_check_feasible_lists_every_violation():
    topo = build_reference_topology()
    cat = Catalog.from_specs([ms("A", cpu=300), ms("B", cpu=300)], [])
    reqs = [ServiceRequest("q1", "eu1", ("cn3",), ("A",)), ServiceRequest("q2", "eu3", ("cn1",), ("B",))]
    ps = {r.id: route_placement(topo, r, cat, {r.chain[0]: n}) for r, n in zip(reqs, ("nd1", "nd6"))}
    verdict = check_feasible(ps, reqs, topo, cat, 1.0)
    assert {(v.constraint, v.subject) for v in verdict.violations} == {
        ("capacity", "nd1"), ("capacity", "nd6"), ("delay", "q1"), ("delay", "q2")}
