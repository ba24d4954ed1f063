"""Seed (anchor) selection by capacity-aware greedy decoding.

Seed scores and pairwise similarities are distance-only heuristics, so the
selected anchor set does not depend on absolute coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .instance import Instance, fleet_lower_bound, pairwise_distances

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Anchors are customer indices in ``1..N``, i.e. rows of ``Instance.coords``."""

    anchor_indices: tuple
    k: int
    scores: np.ndarray
    shortfall: int = 0

    def __post_init__(self):
        anchors = tuple(int(a) for a in self.anchor_indices)
        if len(set(anchors)) != len(anchors):
            raise InvalidArgumentError("anchor indices must be distinct")
        if any(a < 1 for a in anchors):
            raise InvalidArgumentError("anchors must be customers, never the depot")
        object.__setattr__(self, "anchor_indices", anchors)

    def __len__(self):
        return len(self.anchor_indices)

    def __eq__(self, other):
        if not isinstance(other, SeedSet):
            return NotImplemented
        return self.anchor_indices == other.anchor_indices and self.k == other.k

    __hash__ = None


def seed_scores(inst: Instance) -> np.ndarray:
    """Distance of each customer to the depot; distal customers make good seeds."""
    return np.linalg.norm(inst.customers - inst.depot, axis=1)


def default_similarity(inst: Instance) -> np.ndarray:
    """Negative Euclidean distance between customers (N x N, zero diagonal)."""
    return -pairwise_distances(inst.customers)


def capacity_aware_greedy_decode(inst: Instance, scores=None, similarity=None, k: int | None = None) -> SeedSet:
    """Pick up to ``k`` dispersed seeds while simulating each seed's vehicle fill.

    Each round takes the unassigned customer with the highest score as a seed,
    then packs the remaining unassigned customers in descending similarity to it
    while the vehicle has room, removing them from the pool. Ties go to the
    lowest customer index. If the pool empties early the result carries fewer
    anchors and ``shortfall`` says how many are missing.
    """
    n = inst.n_customers
    scores = seed_scores(inst) if scores is None else np.asarray(scores, dtype=float)
    sim = default_similarity(inst) if similarity is None else np.asarray(similarity, dtype=float)
    k = fleet_lower_bound(inst) if k is None else int(k)
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if scores.shape != (n,) or sim.shape != (n, n):
        raise InvalidArgumentError("scores/similarity shape mismatch")
    if not np.all(np.isfinite(sim)) or not np.allclose(sim, sim.T):
        raise InvalidArgumentError("similarity must be symmetric and finite")

    demands = inst.demands
    capacity = inst.capacity
    pool = np.ones(n, dtype=bool)
    anchors = []
    for _ in range(k):
        if not pool.any():
            break
        candidates = np.flatnonzero(pool)
        seed = int(candidates[np.argmax(scores[candidates])])
        anchors.append(seed + 1)
        pool[seed] = False
        load = int(demands[seed])
        rest = np.flatnonzero(pool)
        order = rest[np.argsort(-sim[seed, rest], kind="stable")]
        for j in order:
            if load + demands[j] <= capacity:
                load += int(demands[j])
                pool[j] = False
    return SeedSet(tuple(anchors), k=k, scores=scores, shortfall=k - len(anchors))


def complete_seeds(seeds: SeedSet) -> SeedSet:
    """Fill a shortfall with the best-scoring customers that are not yet anchors."""
    if seeds.shortfall == 0:
        return seeds
    taken = set(seeds.anchor_indices)
    order = np.argsort(-seeds.scores, kind="stable") + 1
    extra = [int(i) for i in order if int(i) not in taken][: seeds.shortfall]
    if len(extra) < seeds.shortfall:
        raise InvalidArgumentError(f"cannot place {seeds.k} distinct anchors among {len(seeds.scores)} customers")
    return SeedSet(seeds.anchor_indices + tuple(extra), k=seeds.k, scores=seeds.scores, shortfall=0)


def select_seeds(inst: Instance, k: int) -> SeedSet:
    """Greedy decode with default scores/similarity, completed to exactly ``k`` anchors."""
    return complete_seeds(capacity_aware_greedy_decode(inst, k=k))


def ground_truth_seeds(solution, inst: Instance, m: int) -> list[list[int]]:
    """Per route, the ``m`` customers farthest from the depot (farthest first)."""
    if m < 1:
        raise InvalidArgumentError("m must be >= 1")
    depot_dist = seed_scores(inst)
    out = []
    for tour in solution.tours:
        customers = sorted(tour.customers)
        if not customers:
            log.warning("skipping empty route")
            continue
        ranked = sorted(customers, key=lambda c: (-depot_dist[c - 1], c))
        out.append(ranked[:m])
    return out
