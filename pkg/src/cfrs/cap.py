"""Capacitated assignment of customers to vehicles (a generalized assignment problem).

``solve_exact`` is a depth-first branch-and-bound; ``solve_fixed`` and
``solve_sparse`` use a soft assignment to shrink the search before calling it.
``brute_force_cap`` enumerates every assignment and serves as a test oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import _bnb
from .exceptions import InvalidArgumentError
from .instance import Instance

_STATUS = {
    _bnb.STATUS_OPTIMAL: "optimal",
    _bnb.STATUS_GAP: "gap_reached",
    _bnb.STATUS_TIME: "time_limit",
    _bnb.STATUS_INFEASIBLE: "infeasible",
    _bnb.STATUS_NODES: "node_limit",
}

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True, eq=False)
class AssignmentMatrix:
    """``assign[i]`` is the vehicle (0-based) serving customer ``i + 1``."""

    assign: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assign, dtype=np.int64)
        if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() >= self.k)):
            raise InvalidArgumentError("assignment entries must lie in [0, k)")
        a.setflags(write=False)
        object.__setattr__(self, "assign", a)

    def __eq__(self, other):
        if not isinstance(other, AssignmentMatrix):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.assign, other.assign)

    __hash__ = None

    def to_matrix(self) -> np.ndarray:
        y = np.zeros((self.assign.shape[0], self.k), dtype=np.int8)
        y[np.arange(self.assign.shape[0]), self.assign] = 1
        return y

    def loads(self, inst: Instance) -> np.ndarray:
        """Per-vehicle load as a fraction of capacity."""
        return np.bincount(self.assign, weights=inst.demands, minlength=self.k) / inst.capacity

    def is_feasible(self, inst: Instance) -> bool:
        return self.assign.shape[0] == inst.n_customers and bool(np.all(self.loads(inst) <= 1.0 + 1e-12))

    def objective(self, delta) -> float:
        delta = np.asarray(delta, dtype=float)
        return float(delta[np.arange(delta.shape[0]), self.assign].sum())


@dataclass(frozen=True)
class CapSolveConfig:
    time_limit: float = 100.0
    target_gap: float = 0.001
    tau_high: float = 0.99
    tau_low: float = 1e-4
    augment_fraction: float = 0.02
    prune_fraction: float = 0.10
    max_fallback_retries: int = 20
    rng_seed: int = 0
    # deterministic alternative to the wall-clock limit; 0 disables it
    node_limit: int = 0
    # subgradient steps refining the Lagrangian multipliers at every node
    lagrangian_iterations: int = 10

    def __post_init__(self):
        if not self.time_limit > 0:
            raise InvalidArgumentError("time_limit must be positive")
        if not 0 < self.target_gap < 1:
            raise InvalidArgumentError("target_gap must be in (0, 1)")
        if not (0 < self.tau_low < self.tau_high < 1) and not (self.tau_low == 0 and self.tau_high < 1):
            raise InvalidArgumentError("need 0 <= tau_low < tau_high < 1")

    def replace(self, **changes) -> "CapSolveConfig":
        return CapSolveConfig(**{**asdict(self), **changes})


@dataclass
class CapSolveStats:
    best_objective: float
    lower_bound: float
    gap: float
    nodes_explored: int
    wall_time: float
    status: str
    fixed: int = 0
    fallback_retries: int = 0
    candidate_edges: int = 0
    augment_k: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _gap(best, bound) -> float:
    if not math.isfinite(best):
        return math.inf
    return max(0.0, (best - bound) / max(abs(best), 1e-12))


def lagrangian_multipliers(cost, q, capacities, iterations: int = 150, upper=None) -> np.ndarray:
    """Subgradient ascent on the dual of the capacity constraints.

    Maximizes ``sum_i min_j (c_ij + lam_j q_i) - sum_j lam_j r_j`` over
    ``lam >= 0``; returns the best multipliers found.
    """
    cost = np.asarray(cost, dtype=float)
    n, k = cost.shape
    lam = np.zeros(k)
    if n == 0:
        return lam
    finite = np.where(np.isfinite(cost), cost, np.nan)
    spread = np.nanmax(finite) - np.nanmin(finite) if np.any(np.isfinite(cost)) else 1.0
    spread = spread if spread > 0 else 1.0
    best_lam, best_val = lam.copy(), -np.inf
    step_scale = 2.0
    stall = 0
    rows = np.arange(n)
    for _ in range(iterations):
        pen = cost + lam[None, :] * q[:, None]
        choice = np.argmin(pen, axis=1)
        val = pen[rows, choice].sum() - lam @ capacities
        if not math.isfinite(val):
            break
        if val > best_val + 1e-12:
            best_val, best_lam = val, lam.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                step_scale *= 0.5
                stall = 0
        sub = np.bincount(choice, weights=q, minlength=k) - capacities
        sub = np.where((lam <= 0) & (sub < 0), 0.0, sub)
        norm = sub @ sub
        if norm < 1e-18 or step_scale < 1e-6:
            break
        target = upper if upper is not None and math.isfinite(upper) and upper > val else val + 0.05 * spread
        lam = np.maximum(0.0, lam + step_scale * (target - val) / norm * sub)
    return best_lam


def _greedy_incumbent(cost, dem, rem, order):
    """Cheapest-feasible-vehicle pass in branching order; None if it gets stuck."""
    rem = rem.copy()
    assign = np.empty(cost.shape[0], dtype=np.int64)
    for i in order:
        choices = [j for j in np.argsort(cost[i], kind="stable") if np.isfinite(cost[i, j]) and rem[j] >= dem[i]]
        if not choices:
            return None
        assign[i] = choices[0]
        rem[choices[0]] -= dem[i]
    return assign


def _branch_order(dem) -> np.ndarray:
    # largest demand first, ties by lowest index
    return np.lexsort((np.arange(dem.shape[0]), -dem)).astype(np.int64)


def _search(cost, dem, rem, capacity, config: CapSolveConfig, time_limit=None):
    """Run the kernel on a (sub)problem; returns (assign | None, stats-like tuple)."""
    cost = np.ascontiguousarray(cost, dtype=float)
    dem = np.ascontiguousarray(dem, dtype=np.int64)
    rem = np.ascontiguousarray(rem, dtype=np.int64)
    n, k = cost.shape
    order = _branch_order(dem)
    incumbent = _greedy_incumbent(cost, dem, rem, order)
    if incumbent is not None:
        best_obj = float(cost[np.arange(n), incumbent].sum())
        best_assign = incumbent.copy()
    else:
        best_obj = math.inf
        best_assign = -np.ones(n, dtype=np.int64)
    lam = lagrangian_multipliers(cost, dem / capacity, rem / capacity, upper=best_obj)
    limit = config.time_limit if time_limit is None else time_limit
    obj, lb, nodes, code = _bnb.branch_and_bound(
        cost, dem, rem, float(capacity), lam, order, best_obj, best_assign,
        config.target_gap, int(config.node_limit), float(limit), int(config.lagrangian_iterations),
    )
    status = _STATUS[int(code)]
    if not math.isfinite(obj):
        return None, (math.inf, lb, int(nodes), "infeasible" if status == "infeasible" else status)
    return best_assign, (float(obj), float(lb), int(nodes), status)


def _check_delta(delta, inst: Instance, k: int) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (inst.n_customers, k):
        raise InvalidArgumentError(f"cost matrix shape {delta.shape} != ({inst.n_customers}, {k})")
    if np.any(np.isnan(delta)):
        raise InvalidArgumentError("cost matrix contains NaN")
    return delta


def solve_exact(delta, inst: Instance, k: int, config: CapSolveConfig | None = None, allowed=None):
    """Minimize total assignment cost under per-vehicle capacity.

    ``allowed`` optionally restricts the candidate (customer, vehicle) edges.
    Returns ``(AssignmentMatrix | None, CapSolveStats)``.
    """
    config = config or CapSolveConfig()
    start = time.perf_counter()
    delta = _check_delta(delta, inst, k)
    cost = delta if allowed is None else np.where(np.asarray(allowed, dtype=bool), delta, np.inf)
    rem = np.full(k, inst.capacity, dtype=np.int64)
    assign, (obj, lb, nodes, status) = _search(cost, inst.demands, rem, inst.capacity, config)
    stats = CapSolveStats(
        best_objective=obj,
        lower_bound=min(lb, obj),
        gap=_gap(obj, lb),
        nodes_explored=nodes,
        wall_time=time.perf_counter() - start,
        status=status,
        candidate_edges=int(np.isfinite(cost).sum()),
    )
    if assign is None:
        return None, stats
    return AssignmentMatrix(assign, k), stats


def brute_force_cap(delta, inst: Instance, k: int):
    """Exhaustive minimizer over all ``k**N`` assignments; ``None`` if infeasible.

    Ties resolve to the lexicographically smallest assignment vector.
    """
    delta = _check_delta(delta, inst, k)
    n = inst.n_customers
    if k ** n > BRUTE_FORCE_LIMIT:
        raise InvalidArgumentError(f"search space {k}^{n} exceeds {BRUTE_FORCE_LIMIT}")
    dem = inst.demands
    best_val, best_vec = math.inf, None
    total = k ** n
    chunk = 1 << 18
    powers = k ** np.arange(n - 1, -1, -1)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(total, lo + chunk))
        vecs = (codes[:, None] // powers[None, :]) % k
        loads = np.zeros((codes.shape[0], k), dtype=np.int64)
        for j in range(k):
            loads[:, j] = (vecs == j) @ dem
        ok = np.all(loads <= inst.capacity, axis=1)
        if not ok.any():
            continue
        vals = delta[np.arange(n)[None, :], vecs].sum(axis=1)
        vals = np.where(ok, vals, np.inf)
        idx = int(np.argmin(vals))
        if vals[idx] < best_val:
            best_val, best_vec = float(vals[idx]), vecs[idx].copy()
    if best_vec is None:
        return None
    return AssignmentMatrix(best_vec, k)


def _soft(y_hat) -> np.ndarray:
    return np.asarray(getattr(y_hat, "y_hat", y_hat), dtype=float)


def solve_fixed(delta, y_hat, inst: Instance, k: int, config: CapSolveConfig | None = None):
    """Node fixing: pin customers with ``max_j Yhat > tau_high``, solve the rest exactly.

    When the residual problem fails, a random ``prune_fraction`` of the fixed
    customers is released and the solve retried; after ``max_fallback_retries``
    the unrestricted problem is solved.
    """
    config = config or CapSolveConfig()
    start = time.perf_counter()
    delta = _check_delta(delta, inst, k)
    y = _soft(y_hat)
    if y.shape != delta.shape:
        raise InvalidArgumentError("soft assignment shape mismatch")
    rng = np.random.default_rng(config.rng_seed)
    n = inst.n_customers
    dem = inst.demands
    fixed = np.flatnonzero(y.max(axis=1) > config.tau_high)
    fixed_to = y.argmax(axis=1)
    nodes = 0
    retries = 0

    while True:
        free = np.setdiff1d(np.arange(n), fixed)
        rem = inst.capacity - np.bincount(fixed_to[fixed], weights=dem[fixed], minlength=k).astype(np.int64)
        assign = None
        if np.all(rem >= 0):
            if free.size == 0:
                assign = fixed_to.copy()
                lb_sub, status = 0.0, "optimal"
            else:
                sub_assign, (obj, lb_sub, sub_nodes, status) = _search(
                    delta[free], dem[free], rem, inst.capacity, config)
                nodes += sub_nodes
                if sub_assign is not None:
                    assign = fixed_to.copy()
                    assign[free] = sub_assign
        if assign is not None:
            fixed_cost = float(delta[fixed, fixed_to[fixed]].sum())
            obj = float(delta[np.arange(n), assign].sum())
            lb = fixed_cost + lb_sub if free.size else obj
            stats = CapSolveStats(
                best_objective=obj,
                lower_bound=min(lb, obj),
                gap=_gap(obj, lb),
                nodes_explored=nodes,
                wall_time=time.perf_counter() - start,
                status=status,
                fixed=int(fixed.size),
                fallback_retries=retries,
                candidate_edges=int(free.size * k + fixed.size),
            )
            return AssignmentMatrix(assign, k), stats
        if fixed.size == 0 or retries >= config.max_fallback_retries:
            break
        retries += 1
        n_release = max(1, math.ceil(config.prune_fraction * fixed.size))
        release = rng.choice(fixed, size=n_release, replace=False)
        fixed = np.setdiff1d(fixed, release)

    result, stats = solve_exact(delta, inst, k, config)
    stats.nodes_explored += nodes
    stats.fallback_retries = retries + 1
    stats.wall_time = time.perf_counter() - start
    return result, stats


def sparse_edges(delta, y_hat, tau_low: float, augment_k: int) -> np.ndarray:
    """Edges with ``Yhat >= tau_low`` plus each customer's ``augment_k`` cheapest vehicles."""
    delta = np.asarray(delta, dtype=float)
    mask = _soft(y_hat) >= tau_low
    if augment_k > 0:
        nearest = np.argsort(delta, axis=1, kind="stable")[:, :augment_k]
        np.put_along_axis(mask, nearest, True, axis=1)
    return mask


def solve_sparse(delta, y_hat, inst: Instance, k: int, config: CapSolveConfig | None = None):
    """Sinkhorn-guided sparsification with nearest-vehicle augmentation.

    Starts from ``ceil(augment_fraction * N)`` nearest vehicles per customer
    and grows that number until the restricted problem yields a solution; at
    ``k`` nearest vehicles the edge set is complete.
    """
    config = config or CapSolveConfig()
    start = time.perf_counter()
    delta = _check_delta(delta, inst, k)
    aug = min(k, max(0, math.ceil(config.augment_fraction * inst.n_customers)))
    nodes = 0
    while True:
        mask = sparse_edges(delta, y_hat, config.tau_low, aug)
        result, stats = solve_exact(delta, inst, k, config, allowed=mask)
        nodes += stats.nodes_explored
        if result is not None or aug >= k:
            stats.nodes_explored = nodes
            stats.augment_k = aug
            stats.wall_time = time.perf_counter() - start
            return result, stats
        aug += 1


def assignment_to_clusters(assign: AssignmentMatrix) -> list[set[int]]:
    """Customer index sets (1-based) per vehicle; empty sets are kept."""
    clusters = [set() for _ in range(assign.k)]
    for i, j in enumerate(assign.assign):
        clusters[int(j)].add(i + 1)
    return clusters


def clusters_to_assignment(clusters, n: int) -> AssignmentMatrix:
    assign = -np.ones(n, dtype=np.int64)
    for j, cluster in enumerate(clusters):
        for c in cluster:
            if assign[c - 1] != -1:
                raise InvalidArgumentError(f"customer {c} appears in two clusters")
            assign[c - 1] = j
    if np.any(assign < 0):
        raise InvalidArgumentError("clusters do not cover every customer")
    return AssignmentMatrix(assign, len(clusters))
