"""Microservice chain placement on cloud-edge networks: a heuristic, an exact solver and a baseline."""

from .baseline_epta import EptaState, place_request_epta, run_epta
from .camp_inc import (NodeProbe, OrchestratorState, failure_tick, place_request,
                       registry_decision, run_scenario)
from .cost_model import (CostBreakdown, Placement, check_feasible, communication_cost,
                         deployment_cost, e2e_delay, evaluate_cost, operational_cost)
from .exact_solver import SolverResult, solve_brute, solve_exact
from .topology import (NodeKind, PhysicalLink, PhysicalNode, Topology, k_shortest_paths,
                       rank_nodes, set_failed, shortest_delay)
from .workload import Catalog, ServiceRequest, generate_catalog, generate_requests, virtual_edges_of

__version__ = "0.1.0"
