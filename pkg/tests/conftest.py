import itertools
import math

import numpy as np
import pytest

from microplace.topology import NodeKind, PhysicalLink, PhysicalNode, Topology


def random_graph(seed: int, n: int, extra: int | None = None, kinds=None) -> Topology:
    """Connected random graph: a random tree plus ``extra`` chords, integer weights."""
    rng = np.random.default_rng(seed)
    ids = [f"n{i}" for i in range(n)]
    links = {}
    for i in range(1, n):
        j = int(rng.integers(i))
        links[tuple(sorted((ids[j], ids[i])))] = (float(rng.integers(1, 10)), float(rng.integers(1, 6)))
    extra = int(rng.integers(0, n + 1)) if extra is None else extra
    if n < 2:
        extra = 0
    for _ in range(extra):
        a, b = sorted(rng.choice(ids, size=2, replace=False).tolist())
        links.setdefault((a, b), (float(rng.integers(1, 10)), float(rng.integers(1, 6))))
    kinds = kinds or {}
    nodes = [PhysicalNode(i, kinds.get(i, NodeKind.EDGE_SERVER), 0.0 if kinds.get(i) in
                          (NodeKind.END_USER, NodeKind.CONTENT_GENERATOR) else 500.0) for i in ids]
    return Topology.build(nodes, [PhysicalLink(a, b, d, c) for (a, b), (d, c) in links.items()])


def simple_paths(topology: Topology, src: str, dst: str, alive_only: bool = True):
    """Every loop-free src->dst path as (delay, node tuple); plain DFS."""
    adj = topology.adjacency(alive_only)
    out = []

    def walk(seq, delay):
        node = seq[-1]
        if node == dst:
            out.append((delay, tuple(seq)))
            return
        for nb in adj.get(node, []):
            if nb not in seq:
                walk(seq + [nb], delay + topology.link(node, nb).delay)

    if src in adj and dst in adj:
        walk([src], 0.0)
    return sorted(out)


@pytest.fixture
def line3():
    """eu - a - b - cn with hosting nodes a, b."""
    nodes = [PhysicalNode("eu", NodeKind.END_USER), PhysicalNode("cn", NodeKind.CONTENT_GENERATOR),
             PhysicalNode("a", NodeKind.EDGE_SERVER, 1000.0, hosts_registry=True),
             PhysicalNode("b", NodeKind.NETWORK_DEVICE, 250.0)]
    links = [PhysicalLink("eu", "a", 1.0, 1.0), PhysicalLink("a", "b", 3.0, 4.0),
             PhysicalLink("b", "cn", 1.0, 1.0)]
    return Topology.build(nodes, links)


def ms(id, cpu=50.0, p=2.0, run=5.0, deploy=100.0, create=0.5, release=0.5, db=False, overhead=20.0):
    from microplace.topology import HOSTING_KINDS
    from microplace.workload import MicroserviceSpec
    return MicroserviceSpec(id, cpu, overhead, p, run, deploy,
                            container_create={k: create for k in HOSTING_KINDS},
                            container_release={k: release for k in HOSTING_KINDS},
                            needs_database=db)


def db(owner, cpu=25.0, run=2.0, deploy=50.0, overhead=20.0):
    from microplace.workload import DatabaseSpec, database_id
    return DatabaseSpec(database_id(owner), owner, cpu, overhead, run, deploy)


def reference_inputs(seed: int, count: int, **overrides):
    from microplace.harness.config import ScenarioConfig
    from microplace.harness.runner import build_inputs
    return build_inputs(ScenarioConfig(**overrides), seed, count)


# one line per acceptance criterion, printed after the run
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
