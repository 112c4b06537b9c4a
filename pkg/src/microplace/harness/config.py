"""Scenario configuration: a YAML document mirroring :class:`ScenarioConfig`."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

import yaml

from ..topology import PhysicalLink, PhysicalNode, Topology, TopologyError
from .reference import build_reference_topology

SOLVERS = ("camp_inc", "exact", "brute", "epta")


class ConfigError(ValueError):
    pass


@dataclass
class CatalogConfig:
    size: int = 10
    cpu_range: tuple[float, float] = (50.0, 150.0)
    container_overhead: float = 20.0
    processing_range: tuple[float, float] = (1.0, 5.0)
    run_cost_range: tuple[float, float] = (1.0, 10.0)
    license_cost: float = 100.0
    container_create: float = 0.5
    container_release: float = 0.5
    database_fraction: float = 0.6
    database_overhead: float = 20.0
    database_license_cost: float = 50.0


@dataclass
class RegistryConfig:
    cpu_demand: float = 50.0
    container_overhead: float = 20.0
    run_cost: float = 5.0
    deploy_cost: float = 50.0


@dataclass
class FailureEvent:
    """Probe results delivered just before request ``at`` (0-based index)."""

    at: int
    fail: tuple[str, ...] = ()
    recover: tuple[str, ...] = ()


@dataclass
class ScenarioConfig:
    name: str = "reference"
    topology: Any = "reference"  # "reference" or {"nodes": [...], "links": [...]}
    link_tiers: dict[str, tuple[float, float]] = field(default_factory=dict)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    request_counts: tuple[int, ...] = (5, 10, 15, 20, 25, 30)
    seeds: tuple[int, ...] = (0,)
    chain_len_range: tuple[int, int] = (3, 5)
    content_set_size: int = 1
    content_policy: str = "remote"
    delay_threshold: float = 150.0
    k_paths: int = 4
    probe_period: float = 1000.0
    failure_schedule: tuple[FailureEvent, ...] = ()
    sticky_failures: bool = False
    solvers: tuple[str, ...] = ("camp_inc", "exact", "epta")
    reuse: bool = True
    include_registry_cost: bool = False
    registry_aggregation: str = "sum"
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    controller: str = "cloud"
    exact_budget: int = 50000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if any(n < 0 for n in self.request_counts):
            raise ConfigError("request counts must be >= 0")
        if not 1 <= self.delay_threshold <= 1e5:
            raise ConfigError("delay_threshold must lie in [1, 1e5] ms")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solvers {bad}; choose from {SOLVERS}")
        if self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.registry_aggregation not in ("sum", "max"):
            raise ConfigError("registry_aggregation must be 'sum' or 'max'")
        if self.content_policy not in ("remote", "any"):
            raise ConfigError("content_policy must be 'remote' or 'any'")
        lo, hi = self.chain_len_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad chain_len_range {self.chain_len_range}")
        if self.exact_budget < 1:
            raise ConfigError("exact_budget must be >= 1")
        topo = self.build_topology()
        if self.controller not in topo.nodes:
            raise ConfigError(f"controller {self.controller!r} is not a topology node")
        for ev in self.failure_schedule:
            if ev.at < 0:
                raise ConfigError("failure events need a non-negative request index")
            for node in (*ev.fail, *ev.recover):
                if node not in topo.nodes:
                    raise ConfigError(f"failure schedule names unknown node {node!r}")

    def build_topology(self) -> Topology:
        if self.topology == "reference":
            return build_reference_topology(self.link_tiers or None)
        if not isinstance(self.topology, dict):
            raise ConfigError("topology must be 'reference' or a mapping with nodes and links")
        try:
            nodes = [PhysicalNode(**n) for n in self.topology.get("nodes", [])]
            links = [PhysicalLink(**l) for l in self.topology.get("links", [])]
            return Topology.build(nodes, links)
        except (TypeError, TopologyError, ValueError) as exc:
            raise ConfigError(f"bad topology: {exc}") from None

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key == "catalog":
            value = _build(CatalogConfig, value, "catalog")
        elif key == "registry":
            value = _build(RegistryConfig, value, "registry")
        elif key == "failure_schedule":
            value = tuple(_build(FailureEvent, ev, f"failure_schedule[{i}]")
                          for i, ev in enumerate(value or []))
        elif key == "link_tiers":
            value = {tier: tuple(v) for tier, v in (value or {}).items()}
        elif isinstance(value, list) and key != "topology":
            value = tuple(value)
        kwargs[key] = value
    if cls is FailureEvent:
        kwargs["fail"] = tuple(kwargs.get("fail", ()))
        kwargs["recover"] = tuple(kwargs.get("recover", ()))
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data or {}, "config")


def load_config(path: str | FsPath) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(config: ScenarioConfig, path: str | FsPath) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
