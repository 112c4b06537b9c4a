"""Recheck a result directory: every CSV metric is recomputed from placements.json."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path as FsPath

from ..camp_inc import RegistrySpec
from ..cost_model import (CostBreakdown, EvaluationError, Placement, RoutingView, check_feasible,
                          e2e_delay, evaluate_cost, instances_of, mean_registry_delay, node_loads)
from ..topology import TopologyError
from .config import load_config
from .runner import build_inputs

TOL = 1e-5


def _placement(topology, rec) -> Placement:
    routes = rec["routes"]
    edges = {}
    for key, nodes in routes.items():
        if "|" in key:
            a, b = key.split("|")
            edges[(a, b)] = topology.make_path(nodes)
    return Placement(rec["request_id"], dict(rec["component_host"]), edges,
                     topology.make_path(routes["ingress"]), topology.make_path(routes["egress"]),
                     frozenset(rec["registry_nodes"]))


def _close(expected: str, value: float) -> bool:
    if expected == "":
        return math.isnan(value)
    return abs(float(expected) - value) <= TOL * max(1.0, abs(value))


def _set_failures(topology, failed):
    for node in topology.nodes.values():
        node.failed = node.id in failed


def audit_cell(config, row: dict, cell: dict) -> list[str]:
    """Problems found in one cell (empty when it checks out)."""
    seed, count, solver = int(row["seed"]), int(row["request_count"]), row["solver"]
    where = f"seed {seed}, {count} requests, {solver}"
    if cell["status"] in ("error", "too_large", "infeasible", "budget_no_solution"):
        return []
    topology, catalog, requests = build_inputs(config, seed, count)
    by_id = {r.id: r for r in requests}
    problems = []
    placements, costs, delays, regs = [], [], [], []
    deployed: set = set()
    registry = RegistrySpec(**dataclasses.asdict(config.registry))
    for rec in cell["placements"]:
        req = by_id.get(rec["request_id"])
        if req is None:
            problems.append(f"{where}: unknown request {rec['request_id']}")
            continue
        try:
            p = _placement(topology, rec)
        except TopologyError as exc:
            problems.append(f"{where}: {rec['request_id']}: {exc}")
            continue
        _set_failures(topology, set(rec["failed_nodes"]))
        view = RoutingView(topology)
        cost = evaluate_cost(p, req, topology, catalog, deployed, config.reuse)
        if solver == "camp_inc" and config.include_registry_cost and rec.get("new_registry"):
            cost = cost + CostBreakdown(registry.run_cost, registry.deploy_cost)
        deployed |= instances_of(p)
        try:
            delay = e2e_delay(p, req, topology, catalog, view)
        except EvaluationError as exc:
            problems.append(f"{where}: {req.id}: {exc}")
            continue
        if solver != "epta":
            verdict = check_feasible({req.id: p}, [req], topology, catalog,
                                     config.delay_threshold, config.reuse)
            problems += [f"{where}: {v.constraint} {v.subject}: {v.detail}"
                         for v in verdict.violations if v.constraint != "capacity"]
        placements.append(p)
        costs.append(cost)
        delays.append(2 * delay if rec.get("retried") else delay)
        regs.append(mean_registry_delay(p, req, view))
    _set_failures(topology, set())
    reserved = {n: registry.footprint for n in cell["added_registries"]}
    loads = node_loads(placements, catalog, config.reuse)
    for node in sorted(set(loads) | set(reserved)):
        load = loads.get(node, 0.0) + reserved.get(node, 0.0)
        if load > topology.nodes[node].capacity + 1e-9:
            problems.append(f"{where}: capacity exceeded on {node} ({load:.3f})")
    total = CostBreakdown.sum(costs)
    mean = (lambda xs: math.fsum(xs) / len(xs) if xs else math.nan)
    checks = {
        "total_cost": total.total, "operational_cost": total.operational,
        "deployment_cost": total.deployment, "communication_cost": total.communication,
        "avg_latency_ms": mean(delays), "avg_registry_delay_ms": mean(regs),
    }
    for key, value in checks.items():
        if not _close(row[key], value):
            problems.append(f"{where}: {key} is {row[key]} in the CSV, recomputed {value:.6f}")
    used = len({h for p in placements for h in p.hosts})
    if int(row["nodes_used"]) != used:
        problems.append(f"{where}: nodes_used is {row['nodes_used']}, recomputed {used}")
    if int(row["accepted"]) != len(placements):
        problems.append(f"{where}: accepted is {row['accepted']}, found {len(placements)} placements")
    return problems


def audit_directory(out_dir: str | FsPath) -> list[str]:
    out = FsPath(out_dir)
    config = load_config(out / "config.yaml")
    with open(out / "results.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells = json.loads((out / "placements.json").read_text(encoding="utf-8"))
    if len(rows) != len(cells):
        return [f"results.csv has {len(rows)} rows but placements.json has {len(cells)} cells"]
    problems = []
    for row, cell in zip(rows, cells):
        key = (int(row["seed"]), int(row["request_count"]), row["solver"])
        if key != (cell["seed"], cell["request_count"], cell["solver"]):
            problems.append(f"row/cell mismatch at {key}")
            continue
        problems += audit_cell(config, row, cell)
    return problems
