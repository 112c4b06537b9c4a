"""Batch experiment runner: one row of metrics per (seed, request count, solver) cell."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from ..baseline_epta import EptaState, run_epta
from ..camp_inc import NodeProbe, OrchestratorState, RegistrySpec, run_scenario
from ..cost_model import CostBreakdown, Placement, RoutingView, e2e_delay, mean_registry_delay
from ..exact_solver import InstanceTooLarge, solve_brute, solve_exact
from ..topology import Topology
from ..workload import Catalog, ServiceRequest, generate_catalog, generate_requests
from .config import ScenarioConfig, dump_config

log = logging.getLogger(__name__)

SOLVER_ORDER = ("camp_inc", "exact", "brute", "epta")
CSV_FIELDS = ("seed", "request_count", "solver", "status", "accepted", "rejections",
              "total_cost", "operational_cost", "deployment_cost", "communication_cost",
              "avg_latency_ms", "avg_registry_delay_ms", "nodes_used", "retries",
              "proven", "nodes_explored")


@dataclass
class ScenarioResult:
    seed: int
    request_count: int
    solver: str
    status: str = "ok"
    accepted: int = 0
    rejections: int = 0
    cost: CostBreakdown = field(default_factory=CostBreakdown)
    avg_latency: float = math.nan
    avg_registry_delay: float = math.nan
    nodes_used: int = 0
    retries: int = 0
    proven: bool | None = None
    nodes_explored: int = 0
    wall_time: float = 0.0  # ms, reported in timing.csv only
    records: list[dict] = field(default_factory=list)  # per accepted request, for placements.json
    added_registries: tuple[str, ...] = ()
    error: str = ""

    @property
    def completed(self) -> bool:
        return self.status in ("ok", "optimal")

    def row(self) -> dict[str, str]:
        def num(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"
        return {
            "seed": str(self.seed), "request_count": str(self.request_count),
            "solver": self.solver, "status": self.status,
            "accepted": str(self.accepted), "rejections": str(self.rejections),
            "total_cost": num(self.cost.total), "operational_cost": num(self.cost.operational),
            "deployment_cost": num(self.cost.deployment),
            "communication_cost": num(self.cost.communication),
            "avg_latency_ms": num(self.avg_latency),
            "avg_registry_delay_ms": num(self.avg_registry_delay),
            "nodes_used": str(self.nodes_used), "retries": str(self.retries),
            "proven": "" if self.proven is None else str(self.proven).lower(),
            "nodes_explored": str(self.nodes_explored),
        }


def build_inputs(config: ScenarioConfig, seed: int,
                 count: int) -> tuple[Topology, Catalog, list[ServiceRequest]]:
    """Fresh topology, the seed's catalog and the first ``count`` requests of the seed."""
    topology = config.build_topology()
    catalog = generate_catalog(np.random.default_rng([seed, 0]),
                               **dataclasses.asdict(config.catalog))
    requests = generate_requests(catalog, topology, count, config.chain_len_range, seed,
                                 config.content_set_size, config.content_policy)
    return topology, catalog, requests


def probe_schedule(config: ScenarioConfig, count: int) -> dict[int, list[NodeProbe]]:
    out: dict[int, list[NodeProbe]] = {}
    for ev in config.failure_schedule:
        if ev.at < count:
            batch = out.setdefault(ev.at, [])
            batch += [NodeProbe(n, False) for n in ev.fail]
            batch += [NodeProbe(n, True) for n in ev.recover]
    return out


def flag_schedule(config: ScenarioConfig, count: int) -> dict[int, dict[str, bool]]:
    out: dict[int, dict[str, bool]] = {}
    for at, probes in probe_schedule(config, count).items():
        flags = out.setdefault(at, {})
        for p in probes:
            if not p.acked:
                flags[p.target] = True
            elif not config.sticky_failures:
                flags[p.target] = False
    return out


def final_failures(config: ScenarioConfig, count: int) -> set[str]:
    failed: set[str] = set()
    schedule = flag_schedule(config, count)
    for at in sorted(schedule):
        for node, down in schedule[at].items():
            (failed.add if down else failed.discard)(node)
    return failed


def placement_record(placement: Placement, failed=(), **extra) -> dict:
    routes = {"ingress": list(placement.ingress.nodes), "egress": list(placement.egress.nodes)}
    for (a, b), path in placement.edge_route.items():
        routes[f"{a}|{b}"] = list(path.nodes)
    rec = {
        "request_id": placement.request_id,
        "component_host": dict(placement.component_host),
        "routes": routes,
        "registry_nodes": sorted(placement.registry_nodes),
        "failed_nodes": sorted(failed),
    }
    rec.update(extra)
    return rec


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def run_camp_cell(config: ScenarioConfig, seed: int, count: int):
    topology, catalog, requests = build_inputs(config, seed, count)
    state = OrchestratorState.initialize(
        topology, k_paths=config.k_paths, probe_period=config.probe_period,
        registry=RegistrySpec(**dataclasses.asdict(config.registry)), reuse=config.reuse,
        sticky_failures=config.sticky_failures,
        include_registry_cost=config.include_registry_cost,
        registry_aggregation=config.registry_aggregation)
    initial = set(state.registry_nodes)
    started = time.perf_counter()
    outcomes = run_scenario(state, topology, requests, catalog, config.delay_threshold,
                            probe_schedule(config, count))
    res = ScenarioResult(seed, count, "camp_inc", wall_time=(time.perf_counter() - started) * 1e3)
    accepted = [o for o in outcomes if o.accepted]
    res.accepted, res.rejections = len(accepted), count - len(accepted)
    res.cost = CostBreakdown.sum(o.cost for o in accepted)
    res.avg_latency = _mean(o.delay for o in accepted)
    res.avg_registry_delay = _mean(o.registry_delay for o in accepted)
    res.nodes_used = len({h for o in accepted for h in o.placement.hosts})
    res.added_registries = tuple(sorted(state.registry_nodes - initial))
    res.records = [placement_record(o.placement, o.failed_nodes, new_registry=o.new_registry)
                   for o in accepted]
    return res, state, outcomes


def solver_topology(config: ScenarioConfig, seed: int, count: int, registries=None,
                    added=()) -> tuple[Topology, Catalog, list[ServiceRequest]]:
    """Inputs for the exact/brute solvers: failures applied, CaMP-INC's registries in place.

    Registries added by the registry manager keep their capacity reserved.
    """
    topology, catalog, requests = build_inputs(config, seed, count)
    for node in final_failures(config, count):
        topology.nodes[node].failed = True
    for node in registries or ():
        topology.nodes[node].hosts_registry = True
    footprint = RegistrySpec(**dataclasses.asdict(config.registry)).footprint
    for node in added:
        n = topology.nodes[node]
        n.residual = max(0.0, n.residual - footprint)
    return topology, catalog, requests


def _solver_cell(name, config, seed, count, registries, added, incumbent):
    topology, catalog, requests = solver_topology(config, seed, count, registries, added)
    res = ScenarioResult(seed, count, name)
    try:
        if name == "exact":
            out = solve_exact(topology, requests, catalog, config.delay_threshold,
                              budget=config.exact_budget, reuse=config.reuse,
                              incumbent=incumbent)
        else:
            out = solve_brute(topology, requests, catalog, config.delay_threshold,
                              reuse=config.reuse)
    except InstanceTooLarge as exc:
        res.status, res.error = "too_large", str(exc)
        return res
    res.status, res.proven = out.status, out.proven
    res.nodes_explored, res.wall_time = out.nodes_explored, out.wall_time
    res.rejections = count
    if out.feasible:
        view = RoutingView(topology)
        failed = sorted(topology.failed_nodes())
        res.accepted, res.rejections = count, 0
        res.cost = out.cost
        placements = [out.placements[r.id] for r in requests]
        res.avg_latency = _mean(e2e_delay(p, r, topology, catalog, view)
                                for p, r in zip(placements, requests))
        res.avg_registry_delay = _mean(mean_registry_delay(p, r, view)
                                       for p, r in zip(placements, requests))
        res.nodes_used = len({h for p in placements for h in p.hosts})
        res.records = [placement_record(p, failed) for p in placements]
    return res


def run_epta_cell(config: ScenarioConfig, seed: int, count: int) -> ScenarioResult:
    topology, catalog, requests = build_inputs(config, seed, count)
    state = EptaState.initialize(topology, config.controller, reuse=config.reuse)
    started = time.perf_counter()
    outcomes = run_epta(topology, requests, catalog, config.delay_threshold, state,
                        flag_schedule(config, count))
    res = ScenarioResult(seed, count, "epta", wall_time=(time.perf_counter() - started) * 1e3)
    accepted = [o for o in outcomes if o.accepted]
    res.accepted, res.rejections = len(accepted), count - len(accepted)
    res.cost = CostBreakdown.sum(o.cost for o in accepted)
    res.avg_latency = _mean(o.recorded_latency for o in accepted)
    res.avg_registry_delay = _mean(o.registry_delay for o in accepted)
    res.nodes_used = len({h for o in accepted for h in o.placement.hosts})
    res.retries = state.retries
    res.records = [placement_record(o.placement, o.failed_nodes, retried=o.retried)
                   for o in accepted]
    return res


def run_cell(config: ScenarioConfig, seed: int, count: int) -> list[ScenarioResult]:
    """Every enabled solver on one (seed, request count) cell, in fixed solver order.

    The exact and brute-force solvers need the registry layout, which the
    registry manager produces, so CaMP-INC runs first whenever either of
    them is enabled (its row is only reported if it was asked for).
    """
    enabled = [s for s in SOLVER_ORDER if s in config.solvers]
    results = []
    registries, added, incumbent = None, (), None
    if "camp_inc" in enabled or "exact" in enabled or "brute" in enabled:
        try:
            camp, state, outcomes = run_camp_cell(config, seed, count)
            registries, added = sorted(state.registry_nodes), camp.added_registries
            incumbent = {o.request_id: o.placement.component_host for o in outcomes if o.accepted}
        except Exception as exc:  # recorded per cell; the batch goes on
            log.exception("camp_inc failed on seed %s, %s requests", seed, count)
            camp = ScenarioResult(seed, count, "camp_inc", status="error", error=repr(exc))
        if "camp_inc" in enabled:
            results.append(camp)
    for name in enabled:
        if name == "camp_inc":
            continue
        try:
            if name == "epta":
                res = run_epta_cell(config, seed, count)
            else:
                res = _solver_cell(name, config, seed, count, registries, added, incumbent)
        except Exception as exc:
            log.exception("%s failed on seed %s, %s requests", name, seed, count)
            res = ScenarioResult(seed, count, name, status="error", error=repr(exc))
        results.append(res)
    return results


def run_batch(config: ScenarioConfig, out_dir: str | FsPath | None = None) -> list[ScenarioResult]:
    results = []
    for seed in config.seeds:
        for count in config.request_counts:
            log.info("seed %s, %s requests", seed, count)
            results += run_cell(config, seed, count)
    if out_dir is not None:
        write_outputs(results, config, out_dir)
    return results


def results_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        writer.writerow(res.row())
    return buf.getvalue()


def write_outputs(results, config: ScenarioConfig, out_dir: str | FsPath) -> None:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(results), encoding="utf-8")
    with open(out / "timing.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "request_count", "solver", "wall_time_ms"])
        for res in results:
            writer.writerow([res.seed, res.request_count, res.solver, f"{res.wall_time:.3f}"])
    cells = [{"seed": r.seed, "request_count": r.request_count, "solver": r.solver,
              "status": r.status, "error": r.error, "added_registries": list(r.added_registries),
              "placements": r.records} for r in results]
    (out / "placements.json").write_text(json.dumps(cells, indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")
    dump_config(config, out / "config.yaml")
