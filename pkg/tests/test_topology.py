import copy
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from microplace.harness.reference import build_reference_topology
from microplace.topology import (NodeKind, PhysicalLink, PhysicalNode, Topology, TopologyError,
                                 k_shortest_paths, pagerank, rank_nodes, set_failed,
                                 shortest_delay)

from conftest import random_graph, simple_paths


def power_iteration(topology, damping=0.85, iters=100):
    # independent oracle: dense Google matrix, fixed iteration count
    adj = topology.adjacency(alive_only=True)
    ids = sorted(adj)
    n = len(ids)
    g = np.zeros((n, n))
    for j, node in enumerate(ids):
        nbrs = adj[node]
        for i, other in enumerate(ids):
            g[i, j] = (1.0 / len(nbrs) if other in nbrs else 0.0) if nbrs else 1.0 / n
    g = damping * g + (1 - damping) / n
    x = np.full(n, 1.0 / n)
    for _ in range(iters):
        x = g @ x
    return dict(zip(ids, x / x.sum()))


def test_shortest_delay_identity_and_single_link():
    topo = Topology.build([PhysicalNode("a", NodeKind.EDGE_SERVER, 10), PhysicalNode("b", NodeKind.EDGE_SERVER, 10)],
                          [PhysicalLink("a", "b", 7.0, 1.0)])
    same = shortest_delay(topo, "a", "a")
    assert same.nodes == ("a",) and same.delay == 0
    assert shortest_delay(topo, "a", "b").delay == 7


def test_shortest_delay_unknown_node():
    topo = random_graph(0, 4)
    with pytest.raises(TopologyError):
        shortest_delay(topo, "n0", "zz")


def test_shortest_delay_matches_enumeration_seed42():
    topo = random_graph(42, 5)
    for dst in ("n1", "n2", "n3", "n4"):
        best = simple_paths(topo, "n0", dst)[0]
        got = shortest_delay(topo, "n0", dst)
        assert (got.delay, got.nodes) == best


def test_k1_equals_shortest_path():
    topo = random_graph(3, 7)
    (only,) = k_shortest_paths(topo, "n0", "n6", math.inf, 1)
    assert only == shortest_delay(topo, "n0", "n6")


def test_zero_cap_gives_nothing():
    topo = random_graph(3, 7)
    assert k_shortest_paths(topo, "n0", "n6", 0.0, 4) == []


def test_k_paths_seed7_top3():
    topo = random_graph(7, 6, extra=5)
    want = simple_paths(topo, "n0", "n5")[:3]
    got = [(p.delay, p.nodes) for p in k_shortest_paths(topo, "n0", "n5", math.inf, 3)]
    assert got == want


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 8), k=st.integers(1, 6),
       cap=st.one_of(st.just(math.inf), st.floats(0, 40)))
def test_k_paths_equal_enumeration(seed, n, k, cap):
    topo = random_graph(seed, n)
    src, dst = "n0", f"n{n - 1}"
    want = [x for x in simple_paths(topo, src, dst) if x[0] <= cap][:k]
    got = k_shortest_paths(topo, src, dst, cap, k)
    assert [(p.delay, p.nodes) for p in got] == want
    assert all(p.is_simple for p in got)


def test_failed_node_never_on_a_path():
    topo = random_graph(11, 8, extra=6)
    set_failed(topo, "n3", True)
    for p in k_shortest_paths(topo, "n0", "n7", math.inf, 10):
        assert "n3" not in p.nodes


def test_cut_vertex_disconnects():
    nodes = [PhysicalNode(x, NodeKind.EDGE_SERVER, 10) for x in "abc"]
    topo = Topology.build(nodes, [PhysicalLink("a", "b", 1, 1), PhysicalLink("b", "c", 1, 1)])
    set_failed(topo, "b", True)
    assert k_shortest_paths(topo, "a", "c", math.inf, 3) == []
    assert shortest_delay(topo, "a", "c") is None


def test_fail_then_restore_is_identity():
    topo = build_reference_topology()
    before = copy.deepcopy(topo)
    set_failed(topo, "es1", True)
    assert topo.nodes["es1"].capacity == before.nodes["es1"].capacity
    assert topo.nodes["es1"].residual == before.nodes["es1"].residual
    assert topo.links == before.links
    set_failed(topo, "es1", False)
    assert topo == before


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 12), fail=st.integers(0, 3))
def test_pagerank_sums_to_one(seed, n, fail):
    topo = random_graph(seed, n)
    for i in range(min(fail, n - 1)):
        set_failed(topo, f"n{i}", True)
    assert abs(sum(pagerank(topo).values()) - 1.0) <= 1e-6


def test_pagerank_matches_networkx():
    topo = build_reference_topology()
    g = nx.Graph()
    g.add_nodes_from(topo.nodes)
    g.add_edges_from(topo.links)
    want = nx.pagerank(g, alpha=0.85, tol=1e-12, max_iter=1000)
    got = pagerank(topo)
    assert max(abs(got[n] - want[n]) for n in want) < 1e-6


def test_rank_singleton_and_symmetric_cycle():
    topo = Topology.build([PhysicalNode("a", NodeKind.EDGE_SERVER, 10)], [])
    assert rank_nodes(topo, topo.make_path(["a"])) == {"a": 1.0}
    tri = Topology.build([PhysicalNode(x, NodeKind.EDGE_SERVER, 10) for x in "abc"],
                         [PhysicalLink("a", "b", 1, 1), PhysicalLink("b", "c", 1, 1),
                          PhysicalLink("a", "c", 1, 1)])
    scores = rank_nodes(tri, tri.make_path(["a", "b", "c"]))
    assert max(scores.values()) - min(scores.values()) < 1e-9


def test_rank_on_reference_path_matches_power_oracle():
    topo = build_reference_topology()
    path = topo.make_path(["cn1", "bs1", "es1", "nd1", "nd2"])
    oracle = power_iteration(topo)
    members = ["bs1", "es1", "nd1", "nd2"]
    total = sum(oracle[m] for m in members)
    got = rank_nodes(topo, path)
    assert sorted(got) == members  # content generator excluded
    for m in members:
        assert got[m] == pytest.approx(oracle[m] / total, abs=1e-6)


def test_rank_independent_of_insertion_order():
    topo = build_reference_topology()
    shuffled = Topology.build(reversed(list(topo.nodes.values())), reversed(list(topo.links.values())))
    path = topo.make_path(["eu1", "bs1", "nd4", "nd5", "nd6", "bs2", "cn3"])
    assert rank_nodes(topo, path) == rank_nodes(shuffled, path)


def test_reference_topology_shape():
    topo = build_reference_topology()
    kinds = [n.kind for n in topo.nodes.values()]
    assert kinds.count(NodeKind.END_USER) == 4 and kinds.count(NodeKind.CONTENT_GENERATOR) == 4
    assert kinds.count(NodeKind.BASE_STATION) == 2 and kinds.count(NodeKind.EDGE_SERVER) == 2
    assert kinds.count(NodeKind.NETWORK_DEVICE) == 6 and kinds.count(NodeKind.CLOUD_SERVER) == 1
    assert len(topo.nodes) == 19
    caps = {n.kind: n.capacity for n in topo.nodes.values() if n.can_host}
    assert sorted(caps.values()) == [250, 500, 1000, 10000]
    for u in topo.nodes_of_kind(NodeKind.END_USER):
        for c in topo.nodes_of_kind(NodeKind.CONTENT_GENERATOR):
            assert shortest_delay(topo, c, u) is not None


def test_user_nodes_cannot_have_capacity():
    with pytest.raises(TopologyError):
        PhysicalNode("u", NodeKind.END_USER, 5.0)
