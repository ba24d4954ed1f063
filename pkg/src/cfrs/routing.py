"""Per-cluster TSP recovery and solution representation.

A tour is an undirected edge multiset over coords rows (0 = depot); a
single-customer tour holds the depot edge twice. Solutions compare through
``canonicalize``, which forgets traversal direction and vehicle labels.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .exceptions import InvalidArgumentError
from .instance import Instance

EXACT_THRESHOLD = 16


def _edges_from_route(route) -> tuple:
    stops = [0, *route, 0]
    return tuple(sorted((min(a, b), max(a, b)) for a, b in zip(stops[:-1], stops[1:])))


@dataclass(frozen=True)
class Tour:
    """``route`` is one traversal order of the customers; only ``edges`` carry identity."""

    route: tuple
    edges: tuple

    @classmethod
    def from_route(cls, route) -> "Tour":
        route = tuple(int(c) for c in route)
        if not route:
            raise InvalidArgumentError("a tour needs at least one customer")
        if len(set(route)) != len(route) or 0 in route:
            raise InvalidArgumentError("route must list distinct customers (no depot)")
        return cls(route=route, edges=_edges_from_route(route))

    @property
    def customers(self) -> frozenset:
        return frozenset(self.route)

    @property
    def node_set(self) -> frozenset:
        return frozenset((0, *self.route))

    def cost(self, dist) -> float:
        return float(sum(dist[a, b] for a, b in self.edges))

    def reversed(self) -> "Tour":
        return Tour.from_route(self.route[::-1])

    def __eq__(self, other):
        if not isinstance(other, Tour):
            return NotImplemented
        return self.edges == other.edges

    def __hash__(self):
        return hash(self.edges)


@dataclass(frozen=True)
class Solution:
    tours: tuple
    total_cost: float

    @classmethod
    def from_tours(cls, inst: Instance, tours) -> "Solution":
        dist = inst.distance_matrix()
        tours = tuple(tours)
        return cls(tours=tours, total_cost=float(sum(t.cost(dist) for t in tours)))

    @property
    def n_routes(self) -> int:
        return len(self.tours)

    def routes(self) -> list[list[int]]:
        return [list(t.route) for t in self.tours]

    def recompute_cost(self, inst: Instance) -> float:
        dist = inst.distance_matrix()
        return float(sum(t.cost(dist) for t in self.tours))

    def is_feasible(self, inst: Instance) -> bool:
        seen = Counter(c for t in self.tours for c in t.route)
        if set(seen) != set(range(1, inst.n_customers + 1)) or any(v != 1 for v in seen.values()):
            return False
        return all(sum(int(inst.demands[c - 1]) for c in t.route) <= inst.capacity for t in self.tours)

    def to_dict(self) -> dict:
        return {"routes": self.routes(), "cost": self.total_cost}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data: dict, inst: Instance) -> "Solution":
        return cls.from_tours(inst, [Tour.from_route(r) for r in data["routes"]])


# ---------------------------------------------------------------------------
# exact TSP


@numba.njit(cache=True)
def _held_karp_kernel(dist):
    """Optimal cycle through node 0 and nodes 1..m of ``dist``; returns the visiting order."""
    m = dist.shape[0] - 1
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = -np.ones((1 << m, m), dtype=np.int64)
    for i in range(m):
        dp[1 << i, i] = dist[0, i + 1]
    for mask in range(1, full + 1):
        for last in range(m):
            if not (mask >> last) & 1:
                continue
            cur = dp[mask, last]
            if cur == np.inf:
                continue
            for nxt in range(m):
                if (mask >> nxt) & 1:
                    continue
                nmask = mask | (1 << nxt)
                cand = cur + dist[last + 1, nxt + 1]
                if cand < dp[nmask, nxt]:
                    dp[nmask, nxt] = cand
                    parent[nmask, nxt] = last
    best = np.inf
    last = -1
    for i in range(m):
        cand = dp[full, i] + dist[i + 1, 0]
        if cand < best:
            best = cand
            last = i
    order = np.empty(m, dtype=np.int64)
    mask = full
    for pos in range(m - 1, -1, -1):
        order[pos] = last + 1
        prev = parent[mask, last]
        mask ^= 1 << last
        last = prev
    return order, best


def _sub_distances(inst: Instance, nodes) -> np.ndarray:
    idx = [0, *nodes]
    c = inst.coords[idx]
    diff = c[:, None, :] - c[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def held_karp(inst: Instance, cluster, exact_threshold: int = EXACT_THRESHOLD) -> Tour:
    """Optimal tour through the depot and ``cluster`` by bitmask dynamic programming."""
    nodes = sorted(int(c) for c in cluster)
    if not nodes:
        raise InvalidArgumentError("cluster is empty")
    if len(nodes) > exact_threshold:
        raise InvalidArgumentError(f"cluster of {len(nodes)} exceeds exact threshold {exact_threshold}")
    if len(nodes) == 1:
        return Tour.from_route(nodes)
    order, _ = _held_karp_kernel(_sub_distances(inst, nodes))
    return Tour.from_route([nodes[i - 1] for i in order])


def _route_length(dist, order) -> float:
    stops = [0, *order, 0]
    return float(sum(dist[a, b] for a, b in zip(stops[:-1], stops[1:])))


def improve_tour(inst: Instance, cluster, seed: int = 0) -> Tour:
    """Nearest-neighbour tour from the depot, then first-improvement 2-opt.

    The scan order is fixed, so ``seed`` has no effect; it is accepted for
    interface symmetry with randomized improvers.
    """
    nodes = sorted(int(c) for c in cluster)
    if not nodes:
        raise InvalidArgumentError("cluster is empty")
    if len(nodes) == 1:
        return Tour.from_route(nodes)
    dist = _sub_distances(inst, nodes)
    m = len(nodes)
    unvisited = set(range(1, m + 1))
    order = []
    cur = 0
    while unvisited:
        nxt = min(unvisited, key=lambda j: (dist[cur, j], j))
        order.append(nxt)
        unvisited.remove(nxt)
        cur = nxt
    path = [0, *order, 0]
    improved = True
    while improved:
        improved = False
        for i in range(1, len(path) - 2):
            for j in range(i + 1, len(path) - 1):
                a, b, c, d = path[i - 1], path[i], path[j], path[j + 1]
                if dist[a, c] + dist[b, d] < dist[a, b] + dist[c, d] - 1e-12:
                    path[i:j + 1] = path[i:j + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    return Tour.from_route([nodes[p - 1] for p in path[1:-1]])


def solve_cluster(inst: Instance, cluster, exact_threshold: int = EXACT_THRESHOLD) -> Tour:
    if len(cluster) <= exact_threshold:
        return held_karp(inst, cluster, exact_threshold)
    return improve_tour(inst, cluster)


def route_clusters(inst: Instance, clusters, exact_threshold: int = EXACT_THRESHOLD) -> Solution:
    """Route each non-empty cluster independently and collect the tours."""
    seen = set()
    for cluster in clusters:
        overlap = seen.intersection(cluster)
        if overlap:
            raise InvalidArgumentError(f"customers {sorted(overlap)} appear in more than one cluster")
        seen.update(cluster)
    if seen != set(range(1, inst.n_customers + 1)):
        raise InvalidArgumentError("clusters must cover every customer exactly once")
    tours = [solve_cluster(inst, c, exact_threshold) for c in clusters if len(c)]
    return Solution.from_tours(inst, tours)


def canonicalize(sol: Solution) -> tuple:
    """Sorted edge multisets, ordered by each tour's smallest customer."""
    tours = sorted(sol.tours, key=lambda t: min(t.route))
    return tuple(tuple(sorted(t.edges)) for t in tours)


def customer_edges_disjoint(sol: Solution) -> bool:
    """True when no customer-customer edge appears in two tours."""
    seen = set()
    for t in sol.tours:
        inner = {e for e in t.edges if e[0] != 0}
        if seen & inner:
            return False
        seen |= inner
    return True
