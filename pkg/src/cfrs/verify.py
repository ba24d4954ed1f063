"""Independent oracles and the self-check suites behind ``cfrs verify``.

Every check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .bench import PipelineConfig, run_pipeline_full
from .cap import CapSolveConfig, assignment_to_clusters, brute_force_cap, solve_exact
from .costs import CostModelParams, pair_features, sample_loss_and_grad
from .exceptions import GradientCheckError
from .instance import Instance, Isometry, apply_isometry, fleet_lower_bound, random_instance
from .ot import SinkhornConfig, build_marginals, ot_loss_and_grad, sinkhorn_log_domain, with_slack_row
from .routing import Solution, Tour, canonicalize, held_karp, route_clusters
from .seeds import SeedSet


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def brute_force_tsp_cost(dist) -> float:
    """Cheapest depot cycle over all visiting orders of nodes 1..m of ``dist``."""
    dist = np.asarray(dist, dtype=float)
    m = dist.shape[0] - 1
    if m == 1:
        return 2.0 * dist[0, 1]
    perms = np.array(list(itertools.permutations(range(1, m + 1))))
    total = dist[0, perms[:, 0]] + dist[perms[:, -1], 0]
    for a in range(m - 1):
        total = total + dist[perms[:, a], perms[:, a + 1]]
    return float(total.min())


def central_difference(fun, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for idx in range(x.size):
        e = np.zeros(x.size)
        e[idx] = h
        e = e.reshape(x.shape)
        flat[idx] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """||a - n|| / max(||a||, ||n||), zero when both vanish."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)


def assert_gradient(fun, grad, x, h: float = 1e-5, tol: float = 1e-4) -> float:
    """Compare ``grad`` with central differences of ``fun`` at ``x``.

    Returns the relative error; raises :class:`GradientCheckError` naming the
    worst entry when it reaches ``tol``.
    """
    numeric = central_difference(fun, x, h)
    err = relative_error(grad, numeric)
    if err >= tol:
        diff = np.abs(np.asarray(grad) - numeric)
        idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
        raise GradientCheckError(
            f"relative error {err:.3e} >= {tol:g}; worst entry {tuple(int(i) for i in idx)}: "
            f"analytic {np.asarray(grad)[idx]:.6e} vs numeric {numeric[idx]:.6e}")
    return err


def cap_optimum_is_unique(delta, inst: Instance, k: int, tol: float = 1e-9) -> bool:
    """True when exactly one feasible assignment attains the minimum (up to ``tol``)."""
    delta = np.asarray(delta, dtype=float)
    n = inst.n_customers
    vals = []
    for vec in itertools.product(range(k), repeat=n):
        loads = np.bincount(vec, weights=inst.demands, minlength=k)
        if np.all(loads <= inst.capacity):
            vals.append(delta[np.arange(n), vec].sum())
    vals = np.sort(vals)
    return len(vals) >= 1 and (len(vals) == 1 or vals[1] - vals[0] > tol)


def _timed(name, fn):
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - start)


def check_cap_oracle(count: int = 200, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        config = CapSolveConfig(target_gap=1e-12)
        mismatches = 0
        for _ in range(count):
            n = int(rng.integers(1, 11))
            k = int(rng.integers(1, 4))
            inst = random_instance(n, seed=int(rng.integers(2**31)))
            delta = rng.uniform(0.0, 2.0, size=(n, k))
            got, _ = solve_exact(delta, inst, k, config)
            want = brute_force_cap(delta, inst, k)
            if (got is None) != (want is None):
                mismatches += 1
            elif want is not None and got.objective(delta) != want.objective(delta):
                if not math.isclose(got.objective(delta), want.objective(delta), rel_tol=1e-12, abs_tol=1e-12):
                    mismatches += 1
        return mismatches == 0, f"{count - mismatches}/{count} objectives match brute force"
    return _timed("cap-oracle", run)


def check_sinkhorn_feasibility(count: int = 100, seed: int = 1) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        failures = 0
        for r in range(count):
            n = int(rng.integers(1, 51))
            k = int(rng.integers(1, 7))
            d = rng.integers(1, 10, size=n)
            q = d / 50.0
            k = max(k, math.ceil(q.sum()))
            eps = (0.01, 0.001)[r % 2]
            rows, cols, _ = build_marginals(q, k)
            plan = sinkhorn_log_domain(with_slack_row(rng.uniform(0.0, 2.0, (n, k))), rows, cols,
                                       SinkhornConfig(epsilon=eps, max_iterations=5000, tolerance=1e-6))
            viol = max(np.abs(plan.pi.sum(axis=1) - rows).max(), np.abs(plan.pi.sum(axis=0) - cols).max())
            worst = max(worst, viol)
            failures += viol >= 1e-6
        return failures == 0, f"worst marginal violation {worst:.2e} over {count} problems"
    return _timed("sinkhorn-feasibility", run)


def check_gradients(count: int = 20, seed: int = 2, h: float = 1e-5) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        config = SinkhornConfig(epsilon=0.01, max_iterations=20, tolerance=1e-12, newton_after=None)
        worst = 0.0
        for _ in range(count):
            inst = random_instance(8, capacity=20, seed=int(rng.integers(2**31)))
            k = 3
            while fleet_lower_bound(inst) > k:
                inst = random_instance(8, capacity=20, seed=int(rng.integers(2**31)))
            target = rng.integers(0, k, size=8)
            q = inst.fractional_demands
            # a band of ~10 epsilon keeps the plan away from saturation, where
            # the log floor would zero out both gradients
            delta = rng.uniform(0.95, 1.05, size=(8, k))
            _, g, _ = ot_loss_and_grad(delta, q, target, config)
            fd = central_difference(lambda x: ot_loss_and_grad(x, q, target, config)[0], delta, h)
            worst = max(worst, relative_error(g, fd))

            seeds = SeedSet(tuple(rng.choice(np.arange(1, 9), size=k, replace=False)), k=k, scores=np.zeros(8))
            feats = pair_features(inst, seeds)
            params = CostModelParams.init(hidden=6, seed=int(rng.integers(2**31)), scale=0.1)
            params.gamma, params.beta = float(rng.normal()), float(rng.normal())
            hidden = params.hidden

            def total(vec):
                p = CostModelParams.from_vector(vec, hidden)
                a, b, _ = sample_loss_and_grad(p, feats, q, target, config, True)
                return a + b

            _, _, gp = sample_loss_and_grad(params, feats, q, target, config, True)
            fdp = central_difference(total, params.to_vector(), h)
            worst = max(worst, relative_error(gp, fdp))
        return worst < 1e-4, f"worst relative error {worst:.2e} over {count} problems"
    return _timed("gradient-check", run)


def check_tsp_oracle(count: int = 100, seed: int = 3) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(count):
            m = int(rng.integers(1, 9))
            inst = random_instance(m, seed=int(rng.integers(2**31)))
            tour = held_karp(inst, range(1, m + 1))
            dist = inst.distance_matrix()
            worst = max(worst, abs(tour.cost(dist) - brute_force_tsp_cost(dist)))
        return worst <= 1e-9, f"worst cost difference {worst:.2e} over {count} clusters"
    return _timed("tsp-oracle", run)


def relabel(sol: Solution, mapping) -> Solution:
    """Rename customers via ``mapping[old] = new`` (depot stays 0)."""
    tours = [Tour.from_route([mapping[c] for c in t.route]) for t in sol.tours]
    return Solution(tuple(tours), sol.total_cost)


def check_symmetry(count: int = 50, seed: int = 4) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        config = PipelineConfig(cap=CapSolveConfig(target_gap=1e-9))
        failures = []
        unique_cases = 0
        for r in range(count):
            inst = random_instance(int(rng.integers(4, 11)), capacity=20, seed=int(rng.integers(2**31)))
            g = Isometry.random(rng)
            base = run_pipeline_full(inst, decode_mode="exact", config=config)
            moved = run_pipeline_full(apply_isometry(inst, g), decode_mode="exact", config=config)
            if abs(base.solution.total_cost - moved.solution.total_cost) > 1e-6:
                failures.append(f"#{r} cost changed under isometry")
            k = base.assignment.k
            if cap_optimum_is_unique(base.delta, inst, k):
                unique_cases += 1
                if canonicalize(base.solution) != canonicalize(moved.solution):
                    failures.append(f"#{r} canonical solution changed under isometry")

            perm = rng.permutation(inst.n_customers)
            permuted = Instance(np.vstack([inst.coords[:1], inst.customers[perm]]), inst.demands[perm], inst.capacity)
            shuffled = run_pipeline_full(permuted, decode_mode="exact", config=config)
            back = {p + 1: int(perm[p]) + 1 for p in range(inst.n_customers)}
            if canonicalize(relabel(shuffled.solution, back)) != canonicalize(base.solution):
                failures.append(f"#{r} customer permutation changed the solution")

            clusters = assignment_to_clusters(base.assignment)
            order = rng.permutation(len(clusters))
            reordered = route_clusters(inst, [clusters[j] for j in order])
            if canonicalize(reordered) != canonicalize(base.solution):
                failures.append(f"#{r} cluster permutation changed the solution")

            flipped = Solution(tuple(t.reversed() for t in base.solution.tours), base.solution.total_cost)
            if canonicalize(flipped) != canonicalize(base.solution):
                failures.append(f"#{r} tour reversal changed the canonical form")
        detail = f"{count} pairs, {unique_cases} with unique CAP optimum"
        if failures:
            detail += "; " + "; ".join(failures[:5])
        return not failures, detail
    return _timed("symmetry-battery", run)


def run_all(quick: bool = False) -> list[CheckResult]:
    scale = 0.25 if quick else 1.0

    def n(x):
        return max(5, int(x * scale))

    return [
        check_cap_oracle(n(200)),
        check_sinkhorn_feasibility(n(100)),
        check_gradients(n(20)),
        check_tsp_oracle(n(100)),
        check_symmetry(n(50)),
    ]
