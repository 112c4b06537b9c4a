"""Microservice/database catalog and end-user service-chain requests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .topology import HOSTING_KINDS, NodeKind, Topology, shortest_delay


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class MicroserviceSpec:
    id: str
    cpu_demand: float
    container_overhead: float
    processing_delay: float
    run_cost: float
    deploy_cost: float
    container_create: dict = field(default_factory=dict)
    container_release: dict = field(default_factory=dict)
    needs_database: bool = False

    def __post_init__(self):
        for name in ("cpu_demand", "container_overhead", "processing_delay", "run_cost", "deploy_cost"):
            if getattr(self, name) < 0:
                raise WorkloadError(f"{self.id}: {name} must be >= 0")
        create = {NodeKind(k): float(v) for k, v in self.container_create.items()}
        release = {NodeKind(k): float(v) for k, v in self.container_release.items()}
        for table in (create, release):
            missing = [k.value for k in HOSTING_KINDS if k not in table]
            if missing:
                raise WorkloadError(f"{self.id}: container timings missing for {missing}")
            if any(v < 0 for v in table.values()):
                raise WorkloadError(f"{self.id}: negative container timing")
        object.__setattr__(self, "container_create", create)
        object.__setattr__(self, "container_release", release)

    @property
    def footprint(self) -> float:
        return self.cpu_demand + self.container_overhead

    def lifecycle_delay(self, kind: NodeKind) -> float:
        return self.container_create[kind] + self.container_release[kind]


@dataclass(frozen=True)
class DatabaseSpec:
    id: str
    owner_microservice: str
    cpu_demand: float
    container_overhead: float
    run_cost: float
    deploy_cost: float

    def __post_init__(self):
        for name in ("cpu_demand", "container_overhead", "run_cost", "deploy_cost"):
            if getattr(self, name) < 0:
                raise WorkloadError(f"{self.id}: {name} must be >= 0")

    @property
    def footprint(self) -> float:
        return self.cpu_demand + self.container_overhead


def database_id(microservice_id: str) -> str:
    return f"db_{microservice_id}"


@dataclass
class Catalog:
    microservices: dict[str, MicroserviceSpec]
    databases: dict[str, DatabaseSpec]

    def __post_init__(self):
        owners = {}
        for db in self.databases.values():
            if db.owner_microservice not in self.microservices:
                raise WorkloadError(f"database {db.id} owned by unknown microservice")
            if db.owner_microservice in owners:
                raise WorkloadError(f"{db.owner_microservice} has more than one database")
            owners[db.owner_microservice] = db.id
        for ms in self.microservices.values():
            if ms.needs_database != (ms.id in owners):
                raise WorkloadError(f"{ms.id}: needs_database does not match database table")
        self._db_of = owners

    @classmethod
    def from_specs(cls, microservices: Iterable[MicroserviceSpec],
                   databases: Iterable[DatabaseSpec] = ()) -> "Catalog":
        return cls({m.id: m for m in microservices}, {d.id: d for d in databases})

    def database_of(self, microservice_id: str) -> DatabaseSpec | None:
        db = self._db_of.get(microservice_id)
        return self.databases[db] if db else None

    def component(self, component_id: str) -> MicroserviceSpec | DatabaseSpec:
        if component_id in self.microservices:
            return self.microservices[component_id]
        if component_id in self.databases:
            return self.databases[component_id]
        raise WorkloadError(f"unknown component {component_id!r}")

    def is_database(self, component_id: str) -> bool:
        return component_id in self.databases


@dataclass(frozen=True)
class ServiceRequest:
    id: str
    end_user: str
    content_nodes: tuple[str, ...]
    chain: tuple[str, ...]

    def __post_init__(self):
        if not self.chain:
            raise WorkloadError(f"{self.id}: empty chain")
        if not self.content_nodes:
            raise WorkloadError(f"{self.id}: no content nodes")
        if len(set(self.chain)) != len(self.chain):
            raise WorkloadError(f"{self.id}: repeated microservice in chain")
        object.__setattr__(self, "chain", tuple(self.chain))
        object.__setattr__(self, "content_nodes", tuple(sorted(self.content_nodes)))

    @property
    def first(self) -> str:
        return self.chain[0]

    @property
    def last(self) -> str:
        return self.chain[-1]

    def validate(self, catalog: Catalog, topology: Topology) -> None:
        for ms in self.chain:
            if ms not in catalog.microservices:
                raise WorkloadError(f"{self.id}: unknown microservice {ms!r}")
        if topology.node(self.end_user).kind != NodeKind.END_USER:
            raise WorkloadError(f"{self.id}: {self.end_user} is not an end user")
        for z in self.content_nodes:
            if topology.node(z).kind != NodeKind.CONTENT_GENERATOR:
                raise WorkloadError(f"{self.id}: {z} is not a content generator")


def components_of(request: ServiceRequest, catalog: Catalog) -> list[str]:
    """Placement order: each microservice followed by its database, if any."""
    out = []
    for ms in request.chain:
        out.append(ms)
        db = catalog.database_of(ms)
        if db is not None:
            out.append(db.id)
    return out


def virtual_edges_of(request: ServiceRequest, catalog: Catalog) -> list[tuple[str, str]]:
    """Chain-order edges, then one (microservice, database) edge per database."""
    edges = list(zip(request.chain, request.chain[1:]))
    for ms in request.chain:
        db = catalog.database_of(ms)
        if db is not None:
            edges.append((ms, db.id))
    return edges


def select_content_node(request: ServiceRequest, topology: Topology,
                        alive_only: bool = True) -> str | None:
    """The content node with the smallest delay to the end user (ties by id)."""
    best = None
    for z in request.content_nodes:
        path = shortest_delay(topology, z, request.end_user, alive_only)
        if path is None:
            continue
        if best is None or path.delay < best[0]:
            best = (path.delay, z)
    return best[1] if best else None


def generate_catalog(rng: np.random.Generator, size: int = 10,
                     cpu_range=(50.0, 150.0), container_overhead: float = 20.0,
                     processing_range=(1.0, 5.0), run_cost_range=(1.0, 10.0),
                     license_cost: float = 100.0, container_create: float = 0.5,
                     container_release: float = 0.5, database_fraction: float = 0.6,
                     database_overhead: float = 20.0,
                     database_license_cost: float = 50.0) -> Catalog:
    if size < 1:
        raise WorkloadError("catalog size must be >= 1")
    ids = [f"ms{i:02d}" for i in range(size)]
    n_db = int(round(database_fraction * size))
    with_db = set(rng.choice(ids, size=n_db, replace=False).tolist()) if n_db else set()
    microservices, databases = [], []
    for ms_id in ids:
        cpu = float(rng.uniform(*cpu_range))
        run = float(rng.uniform(*run_cost_range))
        microservices.append(MicroserviceSpec(
            id=ms_id,
            cpu_demand=cpu,
            container_overhead=container_overhead,
            processing_delay=float(rng.uniform(*processing_range)),
            run_cost=run,
            deploy_cost=license_cost,
            container_create={k: container_create for k in HOSTING_KINDS},
            container_release={k: container_release for k in HOSTING_KINDS},
            needs_database=ms_id in with_db,
        ))
        if ms_id in with_db:
            databases.append(DatabaseSpec(
                id=database_id(ms_id), owner_microservice=ms_id, cpu_demand=cpu / 2,
                container_overhead=database_overhead, run_cost=run / 2,
                deploy_cost=database_license_cost))
    return Catalog.from_specs(microservices, databases)


def _attachment(topology: Topology, node_id: str) -> frozenset[str]:
    return frozenset(topology.neighbors(node_id))


def generate_requests(catalog: Catalog, topology: Topology, count: int,
                      chain_len_range: Sequence[int], rng_seed: int,
                      content_set_size: int = 1, content_policy: str = "remote") -> list[ServiceRequest]:
    """Draw ``count`` requests deterministically from ``rng_seed``.

    With ``content_policy="remote"`` the content set is drawn from generators
    that do not share an access node with the end user (falling back to all
    generators when none qualify); ``"any"`` draws from every generator.
    """
    if not catalog.microservices:
        raise WorkloadError("empty catalog")
    users = topology.nodes_of_kind(NodeKind.END_USER)
    generators = topology.nodes_of_kind(NodeKind.CONTENT_GENERATOR)
    if not users or not generators:
        raise WorkloadError("topology needs at least one end user and one content generator")
    if content_policy not in ("remote", "any"):
        raise WorkloadError(f"unknown content policy {content_policy!r}")
    lo, hi = int(chain_len_range[0]), int(chain_len_range[1])
    if lo < 1 or hi < lo:
        raise WorkloadError(f"bad chain length range {chain_len_range}")
    ms_ids = sorted(catalog.microservices)
    hi = min(hi, len(ms_ids))
    lo = min(lo, hi)
    rng = np.random.default_rng([rng_seed, 1])
    requests = []
    for i in range(count):
        user = users[int(rng.integers(len(users)))]
        pool = generators
        if content_policy == "remote":
            access = _attachment(topology, user)
            remote = [g for g in generators if not (_attachment(topology, g) & access)]
            pool = remote or generators
        size = min(content_set_size, len(pool))
        picks = rng.choice(len(pool), size=size, replace=False)
        content = tuple(pool[int(j)] for j in picks)
        length = int(rng.integers(lo, hi + 1))
        chain = tuple(ms_ids[int(j)] for j in rng.choice(len(ms_ids), size=length, replace=False))
        requests.append(ServiceRequest(id=f"q{i:03d}", end_user=user,
                                       content_nodes=content, chain=chain))
    return requests
