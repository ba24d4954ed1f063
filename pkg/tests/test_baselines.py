import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrs.baselines import fisher_jaikumar_solve, insertion_costs, polar_order, sweep_solve
from cfrs.instance import Isometry, apply_isometry, fleet_lower_bound, random_instance

from .conftest import make_instance


def clusters_of(sol):
    return sorted(sorted(t.route) for t in sol.tours)


def test_single_customer():
    inst = make_instance([[0, 0], [0.6, 0.8]], [5])
    for sol in (sweep_solve(inst), sweep_solve(inst, all_starts=True), fisher_jaikumar_solve(inst)):
        assert sol.routes() == [[1]]
        assert sol.total_cost == pytest.approx(2.0)


def test_compass_customers_pair_up_with_neighbours():
    # N, E, S, W at demand 25: two per vehicle, and adjacent pairs beat opposite ones
    inst = make_instance([[0, 0], [0, 1], [1, 0], [0, -1], [-1, 0]], [25, 25, 25, 25])
    for sol in (sweep_solve(inst), sweep_solve(inst, all_starts=True), fisher_jaikumar_solve(inst)):
        assert sol.n_routes == 2
        for r in clusters_of(sol):
            assert sorted(r) not in ([1, 3], [2, 4])
        assert sol.total_cost == pytest.approx(4 + 2 * math.sqrt(2))


def test_polar_order_starts_east_and_runs_counter_clockwise():
    inst = make_instance([[0, 0], [0, 1], [1, 0], [0, -1], [-1, 0]], [1] * 4)
    assert polar_order(inst) == [2, 1, 4, 3]


def test_polar_order_ties_by_radius():
    inst = make_instance([[0, 0], [2, 0], [1, 0], [0, 0]], [1] * 3)
    # the coincident customer has no angle and sorts first
    assert polar_order(inst) == [3, 2, 1]


def test_sweep_single_start_begins_at_customer_one():
    inst = make_instance([[0, 0], [0, 1], [1, 0], [0, -1], [-1, 0]], [30, 30, 30, 30])
    sol = sweep_solve(inst)
    assert sol.n_routes == 4


@given(n=st.integers(1, 40), seed=st.integers(0, 2**31))
def test_sweep_is_feasible(n, seed):
    inst = random_instance(n, seed=seed)
    for sol in (sweep_solve(inst), sweep_solve(inst, all_starts=True)):
        assert sol.is_feasible(inst)
        assert sol.recompute_cost(inst) == pytest.approx(sol.total_cost, abs=1e-9)
    assert sweep_solve(inst, all_starts=True).total_cost <= sweep_solve(inst).total_cost + 1e-9


@pytest.mark.parametrize("all_starts", [False, True])
def test_sweep_cost_invariant_under_isometry(all_starts):
    rng = np.random.default_rng(0)
    for s in range(10):
        inst = random_instance(20, seed=s)
        base = sweep_solve(inst, all_starts=all_starts)
        for reflect in (False, True):
            g = Isometry(rotation_angle=rng.uniform(0, 2 * math.pi), reflect=reflect,
                         translation=tuple(rng.normal(size=2)))
            moved = sweep_solve(apply_isometry(inst, g), all_starts=all_starts)
            assert moved.total_cost == pytest.approx(base.total_cost, abs=1e-9)


def test_sweep_runs_both_directions():
    # counter-clockwise from customer 1 pairs {1, 2} and {3, 4}; clockwise pairs {1, 4} and {2, 3}
    inst = make_instance([[0, 0], [1, 0], [0.1, 1], [-1, 0], [0.1, -1]], [25, 25, 25, 25])
    sol = sweep_solve(inst)
    ccw = [[1, 2], [3, 4]]
    cw = [[1, 4], [2, 3]]
    assert clusters_of(sol) in (ccw, cw)
    dist = inst.distance_matrix()
    costs = [sum(dist[0, a] + dist[a, b] + dist[b, 0] for a, b in p) for p in (ccw, cw)]
    assert sol.total_cost == pytest.approx(min(costs))


def test_insertion_cost_of_a_seed_is_zero():
    inst = random_instance(10, seed=3)
    anchors = [2, 5, 9]
    c = insertion_costs(inst, anchors)
    assert c.shape == (10, 3)
    for j, a in enumerate(anchors):
        assert c[a - 1, j] == pytest.approx(0.0, abs=1e-12)
    assert np.all(c >= 0)


def test_insertion_cost_hand_value():
    inst = make_instance([[0, 0], [3, 0], [3, 4]], [1, 1])
    # d(0,1) + d(1,2) - d(0,2) = 3 + 4 - 5
    assert insertion_costs(inst, [2])[0, 0] == pytest.approx(2.0)


def test_fisher_jaikumar_separates_two_clusters():
    coords = [[0.5, 0.5], [0.0, 0.0], [0.05, 0.02], [0.02, 0.06], [1.0, 1.0], [0.96, 0.98], [0.98, 0.93]]
    inst = make_instance(coords, [15] * 6)
    assert fleet_lower_bound(inst) == 2
    sol = fisher_jaikumar_solve(inst)
    assert clusters_of(sol) == [[1, 2, 3], [4, 5, 6]]


@settings(max_examples=15)
@given(n=st.integers(1, 60), seed=st.integers(0, 2**31))
def test_fisher_jaikumar_always_feasible(n, seed):
    inst = random_instance(n, seed=seed)
    sol = fisher_jaikumar_solve(inst)
    assert sol.is_feasible(inst)
    assert sol.n_routes <= fleet_lower_bound(inst) + 1
