"""Classical cluster-first route-second baselines: Sweep and Fisher-Jaikumar."""

from __future__ import annotations

import math

import numpy as np

from .cap import CapSolveConfig, assignment_to_clusters, solve_exact
from .exceptions import InfeasibleError
from .instance import Instance, fleet_lower_bound, pairwise_distances
from .routing import EXACT_THRESHOLD, Solution, route_clusters
from .seeds import select_seeds


def polar_order(inst: Instance) -> list[int]:
    """Customers by polar angle about the depot, ties by radius then index."""
    rel = inst.customers - inst.depot
    radius = np.hypot(rel[:, 0], rel[:, 1])
    angle = np.where(radius > 0, np.arctan2(rel[:, 1], rel[:, 0]), 0.0)
    angle = np.mod(angle, 2.0 * math.pi)
    keys = sorted(range(inst.n_customers), key=lambda i: (angle[i], radius[i], i))
    return [i + 1 for i in keys]


def _sweep_clusters(inst: Instance, order) -> list[set]:
    clusters, current, load = [], set(), 0
    for c in order:
        d = int(inst.demands[c - 1])
        if load + d > inst.capacity:
            clusters.append(current)
            current, load = set(), 0
        current.add(c)
        load += d
    clusters.append(current)
    return clusters


def sweep_solve(inst: Instance, all_starts: bool = False, exact_threshold: int = EXACT_THRESHOLD) -> Solution:
    """Fill vehicles in polar-angle order around the depot.

    The sweep starts at customer 1's angle and runs both counter-clockwise
    and clockwise, keeping the cheaper result so that mirroring the instance
    cannot change the cost. With ``all_starts`` every rotation of the angular
    order is tried as well.
    """
    ccw = polar_order(inst)
    cw = ccw[:1] + ccw[:0:-1]
    cache: dict = {}
    best = None
    for order in (ccw, cw):
        pos = order.index(1)
        starts = range(len(order)) if all_starts else [pos]
        for s in starts:
            clusters = _sweep_clusters(inst, order[s:] + order[:s])
            key = tuple(sorted(tuple(sorted(c)) for c in clusters))
            if key in cache:
                continue
            sol = route_clusters(inst, clusters, exact_threshold)
            cache[key] = sol
            if best is None or sol.total_cost < best.total_cost - 1e-12:
                best = sol
    return best


def insertion_costs(inst: Instance, anchors) -> np.ndarray:
    """c_ij = d(0, i) + d(i, s_j) - d(0, s_j), clamped at zero."""
    anchors = list(anchors)
    d = pairwise_distances(inst.coords)
    c = d[1:, 0][:, None] + d[1:][:, anchors] - d[0, anchors][None, :]
    return np.maximum(c, 0.0)


def fisher_jaikumar_solve(inst: Instance, config: CapSolveConfig | None = None,
                          exact_threshold: int = EXACT_THRESHOLD) -> Solution:
    """Greedy-decoded seeds, insertion-cost GAP, per-cluster TSP; one extra vehicle on infeasibility."""
    config = config or CapSolveConfig()
    k_min = fleet_lower_bound(inst)
    for k in (k_min, k_min + 1):
        if k > inst.n_customers:
            break
        seeds = select_seeds(inst, k)
        cost = insertion_costs(inst, seeds.anchor_indices)
        assign, _ = solve_exact(cost, inst, k, config)
        if assign is not None:
            return route_clusters(inst, assignment_to_clusters(assign), exact_threshold)
    raise InfeasibleError(f"no feasible assignment with {k_min} or {k_min + 1} vehicles")
