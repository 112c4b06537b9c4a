import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microplace.harness.reference import build_reference_topology
from microplace.workload import (Catalog, ServiceRequest, WorkloadError, generate_catalog,
                                 generate_requests, select_content_node, virtual_edges_of)

from conftest import db, ms


@pytest.fixture(scope="module")
def catalog():
    return generate_catalog(np.random.default_rng(0))


@pytest.fixture(scope="module")
def topo():
    return build_reference_topology()


def test_zero_requests(catalog, topo):
    assert generate_requests(catalog, topo, 0, (3, 5), 1) == []


def test_same_seed_same_requests(catalog, topo):
    assert generate_requests(catalog, topo, 5, (3, 5), 1) == generate_requests(catalog, topo, 5, (3, 5), 1)


def test_mean_chain_length(catalog, topo):
    reqs = generate_requests(catalog, topo, 1000, (3, 5), 9)
    assert len(reqs) == 1000
    assert abs(np.mean([len(r.chain) for r in reqs]) - 4.0) <= 0.1


def test_requests_need_users_and_generators(catalog):
    from microplace.topology import NodeKind, PhysicalNode, Topology
    bare = Topology.build([PhysicalNode("a", NodeKind.EDGE_SERVER, 10)], [])
    with pytest.raises(WorkloadError):
        generate_requests(catalog, bare, 1, (3, 5), 0)


def test_remote_policy_avoids_shared_base_station(catalog, topo):
    for r in generate_requests(catalog, topo, 200, (3, 5), 4):
        (z,) = r.content_nodes
        assert set(topo.neighbors(z)).isdisjoint(topo.neighbors(r.end_user))


def test_virtual_edges_examples():
    cat = Catalog.from_specs([ms("A"), ms("B", db=True), ms("C")], [db("B")])
    assert virtual_edges_of(ServiceRequest("q", "u", ("z",), ("A",)), cat) == []
    assert virtual_edges_of(ServiceRequest("q", "u", ("z",), ("A", "B")), cat) == [("A", "B"), ("B", "db_B")]
    full = Catalog.from_specs([ms(x, db=True) for x in "ABC"], [db(x) for x in "ABC"])
    assert len(virtual_edges_of(ServiceRequest("q", "u", ("z",), ("A", "B", "C")), full)) == 5


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), count=st.integers(0, 20))
def test_edge_count_identity(seed, count):
    cat = generate_catalog(np.random.default_rng(seed))
    topo = build_reference_topology()
    for r in generate_requests(cat, topo, count, (1, 6), seed):
        with_db = sum(cat.database_of(m) is not None for m in r.chain)
        assert len(virtual_edges_of(r, cat)) == len(r.chain) - 1 + with_db


def test_catalog_defaults(catalog):
    assert len(catalog.microservices) == 10 and len(catalog.databases) == 6
    for m in catalog.microservices.values():
        assert 50 <= m.cpu_demand <= 150 and m.deploy_cost == 100.0
        d = catalog.database_of(m.id)
        if d is not None:
            assert d.cpu_demand == m.cpu_demand / 2 and d.run_cost == m.run_cost / 2
            assert d.deploy_cost == 50.0


def test_content_node_is_nearest():
    topo = build_reference_topology()
    r = ServiceRequest("q", "eu1", ("cn3", "cn1"), ("ms00",))
    assert select_content_node(r, topo) == "cn1"


def test_bad_requests_rejected():
    with pytest.raises(WorkloadError):
        ServiceRequest("q", "u", ("z",), ())
    with pytest.raises(WorkloadError):
        ServiceRequest("q", "u", ("z",), ("A", "A"))
    with pytest.raises(WorkloadError):
        Catalog.from_specs([ms("A", db=True)], [])
