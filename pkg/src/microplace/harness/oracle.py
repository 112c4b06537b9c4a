"""Small random instances and the exact-vs-brute-force cross-validation suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exact_solver import solve_brute, solve_exact
from ..topology import HOSTING_KINDS, NodeKind, PhysicalLink, PhysicalNode, Topology
from ..workload import Catalog, DatabaseSpec, MicroserviceSpec, ServiceRequest, components_of

MAX_ASSIGNMENTS = 20000  # keeps one brute-force enumeration around a second


@dataclass
class SmallInstance:
    seed: int
    topology: Topology
    catalog: Catalog
    requests: list[ServiceRequest]
    delay_threshold: float

    @property
    def assignments(self) -> int:
        n_slots = sum(len(components_of(r, self.catalog)) for r in self.requests)
        return len(self.topology.hosting_nodes()) ** n_slots


def small_instance(seed: int, max_hosts: int = 5, max_requests: int = 2,
                   max_chain: int = 3) -> SmallInstance:
    """A connected toy network with integer-valued parameters.

    Integer delays and prices make every cost an exactly representable sum,
    so two solvers reaching the same optimum report bit-identical totals.
    """
    rng = np.random.default_rng([seed, 7])
    n_hosts = int(rng.integers(2, max_hosts + 1))
    kinds = [NodeKind.NETWORK_DEVICE, NodeKind.BASE_STATION, NodeKind.EDGE_SERVER, NodeKind.CLOUD_SERVER]
    hosts = [f"h{i}" for i in range(n_hosts)]
    nodes = [PhysicalNode(h, kinds[int(rng.integers(len(kinds)))],
                          float(rng.choice([80, 150, 300, 600]))) for h in hosts]
    links = []
    for i in range(1, n_hosts):  # random tree, then a few chords
        j = int(rng.integers(i))
        links.append(PhysicalLink(hosts[j], hosts[i], float(rng.integers(1, 8)), float(rng.integers(1, 6))))
    have = {tuple(sorted((l.a, l.b))) for l in links}
    for _ in range(int(rng.integers(0, n_hosts))):
        a, b = sorted(rng.choice(hosts, size=2, replace=False).tolist()) if n_hosts > 1 else (None, None)
        if a is not None and (a, b) not in have:
            have.add((a, b))
            links.append(PhysicalLink(a, b, float(rng.integers(1, 8)), float(rng.integers(1, 6))))
    for name, kind in (("eu0", NodeKind.END_USER), ("eu1", NodeKind.END_USER),
                       ("cn0", NodeKind.CONTENT_GENERATOR), ("cn1", NodeKind.CONTENT_GENERATOR)):
        nodes.append(PhysicalNode(name, kind))
        links.append(PhysicalLink(name, hosts[int(rng.integers(n_hosts))],
                                  float(rng.integers(1, 5)), float(rng.integers(1, 4))))
    for h in rng.choice(hosts, size=int(rng.integers(1, 3)) if n_hosts > 1 else 1, replace=False):
        nodes[hosts.index(str(h))].hosts_registry = True
    topology = Topology.build(nodes, links)

    ms_ids = [f"m{i}" for i in range(4)]
    microservices, databases = [], []
    for m in ms_ids:
        needs_db = bool(rng.random() < 0.4)
        cpu = float(rng.integers(2, 10) * 10)
        microservices.append(MicroserviceSpec(
            m, cpu, 10.0, float(rng.integers(1, 5)), float(rng.integers(1, 10)),
            float(rng.integers(2, 11) * 10),
            container_create={k: 0.5 for k in HOSTING_KINDS},
            container_release={k: float(rng.integers(0, 2)) + 0.5 for k in HOSTING_KINDS},
            needs_database=needs_db))
        if needs_db:
            databases.append(DatabaseSpec(f"db_{m}", m, cpu / 2, 10.0, float(rng.integers(1, 5)),
                                          float(rng.integers(1, 6) * 10)))
    catalog = Catalog.from_specs(microservices, databases)

    requests: list[ServiceRequest] = []
    budget = MAX_ASSIGNMENTS
    for r in range(int(rng.integers(1, max_requests + 1))):
        length = int(rng.integers(1, max_chain + 1))
        chain = tuple(rng.choice(ms_ids, size=length, replace=False).tolist())
        req = ServiceRequest(f"q{r}", f"eu{int(rng.integers(2))}", (f"cn{int(rng.integers(2))}",), chain)
        slots = sum(len(components_of(x, catalog)) for x in (*requests, req))
        if n_hosts ** slots > budget:
            break
        requests.append(req)
    if not requests:  # a single one-microservice request always fits the guard
        requests.append(ServiceRequest("q0", "eu0", ("cn0",), (ms_ids[0],)))
    delay_threshold = float(rng.integers(15, 60))
    return SmallInstance(seed, topology, catalog, requests, delay_threshold)


@dataclass
class OracleCase:
    seed: int
    assignments: int
    exact_status: str
    exact_total: float | None
    brute_total: float | None

    @property
    def agrees(self) -> bool:
        return self.exact_total == self.brute_total and self.exact_status in ("optimal", "infeasible")


def cross_validate(seeds, budget: int = 1_000_000) -> list[OracleCase]:
    cases = []
    for seed in seeds:
        inst = small_instance(seed)
        exact = solve_exact(inst.topology, inst.requests, inst.catalog, inst.delay_threshold,
                            budget=budget)
        brute = solve_brute(inst.topology, inst.requests, inst.catalog, inst.delay_threshold)
        cases.append(OracleCase(seed, inst.assignments, exact.status,
                                exact.cost.total if exact.feasible else None,
                                brute.cost.total if brute.feasible else None))
    return cases
