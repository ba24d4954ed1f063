import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfrs.cap import (
    AssignmentMatrix,
    CapSolveConfig,
    assignment_to_clusters,
    brute_force_cap,
    clusters_to_assignment,
    solve_exact,
    solve_fixed,
    solve_sparse,
    sparse_edges,
)
from cfrs.exceptions import InvalidArgumentError
from cfrs.instance import fleet_lower_bound, random_instance

from .conftest import make_instance

EXACT = CapSolveConfig(target_gap=1e-12)


def line(demands, capacity=50):
    return make_instance(np.zeros((len(demands) + 1, 2)), demands, capacity)


def overloaded_fixture():
    """Confident soft assignment that puts both 30-unit customers on vehicle 0."""
    inst = line([30, 30, 20, 20])
    delta = np.array([[0.1, 1.0], [0.1, 1.0], [1.0, 0.2], [1.0, 0.2]])
    y_hat = np.array([[0.999, 0.001], [0.999, 0.001], [0.5, 0.5], [0.5, 0.5]])
    return inst, delta, y_hat


def test_config_validation():
    for bad in ({"time_limit": 0}, {"target_gap": 0}, {"target_gap": 1}, {"tau_low": 0.5, "tau_high": 0.4}):
        with pytest.raises(InvalidArgumentError):
            CapSolveConfig(**bad)
    assert CapSolveConfig(tau_low=0).tau_low == 0
    d = CapSolveConfig()
    assert (d.time_limit, d.target_gap, d.tau_high, d.tau_low) == (100.0, 0.001, 0.99, 1e-4)
    assert (d.augment_fraction, d.prune_fraction, d.max_fallback_retries) == (0.02, 0.10, 20)


def test_single_customer():
    assign, stats = solve_exact([[0.4]], line([7]), 1, EXACT)
    assert assign.assign.tolist() == [0]
    assert stats.best_objective == 0.4 and stats.status == "optimal"


def test_half_loads_match_enumeration():
    inst = line([25, 25, 25, 25])
    delta = np.array([[0.1, 0.9], [0.2, 0.8], [0.7, 0.3], [0.6, 0.5]])
    assign, _ = solve_exact(delta, inst, 2, EXACT)
    feasible = [v for v in itertools.product(range(2), repeat=4) if np.bincount(v, minlength=2).max() <= 2]
    best = min(feasible, key=lambda v: delta[np.arange(4), v].sum())
    assert tuple(assign.assign) == best == (0, 0, 1, 1)


def test_capacity_violation_is_infeasible():
    assign, stats = solve_exact([[0.1], [0.2]], line([30, 30]), 1, EXACT)
    assert assign is None and stats.status == "infeasible"
    assert brute_force_cap([[0.1], [0.2]], line([30, 30]), 1) is None


def test_brute_force_three_by_two():
    inst = line([30, 20, 25])
    delta = np.array([[0.0, 1.0], [0.5, 0.2], [0.1, 0.9]])
    # the unconstrained optimum [0, 1, 0] overloads vehicle 0 (55); next best is [0, 1, 1] = 1.1
    assert brute_force_cap(delta, inst, 2).assign.tolist() == [0, 1, 1]
    assert brute_force_cap([[0.3]], line([1]), 1).assign.tolist() == [0]


def test_brute_force_lexicographic_ties():
    assert brute_force_cap(np.zeros((3, 2)), line([1, 1, 1]), 2).assign.tolist() == [0, 0, 0]


def test_brute_force_refuses_large_spaces():
    with pytest.raises(InvalidArgumentError):
        brute_force_cap(np.zeros((15, 3)), line([1] * 15), 3)


@given(n=st.integers(1, 9), k=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_oracle_equivalence(n, k, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(n, seed=seed)
    delta = rng.uniform(0, 2, (n, k))
    got, stats = solve_exact(delta, inst, k, EXACT)
    want = brute_force_cap(delta, inst, k)
    assert (got is None) == (want is None)
    if want is not None:
        assert got.objective(delta) == pytest.approx(want.objective(delta), abs=1e-12)
        assert got.is_feasible(inst)
        assert stats.lower_bound <= stats.best_objective + 1e-12
        assert stats.gap >= 0


def test_tight_instance_infeasible_by_packing():
    inst = line([30, 30, 30])
    assert solve_exact(np.zeros((3, 2)), inst, 2, EXACT)[0] is None
    assert solve_exact(np.zeros((3, 3)), inst, 3, EXACT)[0] is not None


def _hard_cap(n=60):
    # near-constant costs at K_min leave the bounds almost no room to prune
    inst = random_instance(n, seed=1)
    k = fleet_lower_bound(inst)
    return inst, np.random.default_rng(1).uniform(0.99, 1.01, (n, k)), k


def test_node_limit_keeps_incumbent():
    inst, delta, k = _hard_cap()
    assign, stats = solve_exact(delta, inst, k, CapSolveConfig(target_gap=1e-12, node_limit=4096))
    assert stats.status == "node_limit" and stats.nodes_explored == 4096
    assert assign is not None and assign.is_feasible(inst)
    assert stats.lower_bound <= stats.best_objective + 1e-12


def test_time_limit_keeps_incumbent():
    inst, delta, k = _hard_cap(100)
    assign, stats = solve_exact(delta, inst, k, CapSolveConfig(target_gap=1e-12, time_limit=0.1))
    assert stats.status == "time_limit"
    assert stats.wall_time < 2.0
    assert assign is not None and assign.is_feasible(inst)
    assert 0 < stats.gap < 1


def test_determinism():
    rng = np.random.default_rng(4)
    inst = random_instance(25, seed=9)
    delta = rng.uniform(0, 2, (25, 4))
    a, _ = solve_exact(delta, inst, 4, EXACT)
    b, _ = solve_exact(delta, inst, 4, EXACT)
    assert a == b


def test_fixed_all_confident():
    inst = line([10, 10, 10])
    delta = np.array([[0.1, 0.5], [0.6, 0.2], [0.3, 0.9]])
    y = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assign, stats = solve_fixed(delta, y, inst, 2, EXACT)
    assert assign.assign.tolist() == [0, 1, 0]
    assert stats.best_objective == pytest.approx(0.6)
    assert stats.fixed == 3


def test_fixed_uniform_equals_exact():
    rng = np.random.default_rng(1)
    inst = random_instance(12, seed=2)
    delta = rng.uniform(0, 2, (12, 3))
    y = np.full((12, 3), 1 / 3)
    a, s = solve_fixed(delta, y, inst, 3, EXACT)
    b, _ = solve_exact(delta, inst, 3, EXACT)
    assert s.fixed == 0 and a == b


def test_fixed_fallback_restores_feasibility():
    inst, delta, y_hat = overloaded_fixture()
    assign, stats = solve_fixed(delta, y_hat, inst, 2, EXACT)
    assert stats.fallback_retries >= 1
    assert assign is not None and assign.is_feasible(inst)
    assert assign.objective(delta) >= brute_force_cap(delta, inst, 2).objective(delta) - 1e-12


def test_fixed_final_fallback_to_full_problem():
    inst, delta, y_hat = overloaded_fixture()
    assign, stats = solve_fixed(delta, y_hat, inst, 2, EXACT.replace(max_fallback_retries=0))
    assert stats.fallback_retries == 1
    assert assign == solve_exact(delta, inst, 2, EXACT)[0]


def test_fixed_is_seeded():
    inst = random_instance(30, seed=5)
    rng = np.random.default_rng(0)
    delta = rng.uniform(0, 2, (30, 4))
    y = np.eye(4)[rng.integers(0, 4, 30)] * 0.997 + 0.00075
    runs = [solve_fixed(delta, y, inst, 4, EXACT.replace(rng_seed=3)) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert runs[0][1].fallback_retries == runs[1][1].fallback_retries


def test_sparse_full_density_equals_exact():
    rng = np.random.default_rng(2)
    inst = random_instance(15, seed=6)
    delta = rng.uniform(0, 2, (15, 3))
    y = rng.dirichlet(np.ones(3), size=15)
    a, _ = solve_sparse(delta, y, inst, 3, EXACT.replace(tau_low=0.0))
    b, _ = solve_exact(delta, inst, 3, EXACT)
    assert a == b


def test_sparse_one_hot_with_augmentation():
    rng = np.random.default_rng(3)
    inst = random_instance(10, seed=1)
    delta = rng.uniform(0, 2, (10, 3))
    y = np.eye(3)[[0, 1, 2, 0, 1, 2, 0, 1, 2, 0]]
    # choose the one-hot column to differ from each row's cheapest vehicle
    y = np.eye(3)[(delta.argmin(axis=1) + 1) % 3]
    mask = sparse_edges(delta, y, 0.5, 1)
    assert np.all(mask.sum(axis=1) >= 2)
    assign, stats = solve_sparse(delta, y, inst, 3, EXACT.replace(tau_low=0.5, augment_fraction=0.1))
    assert stats.augment_k >= 1 and assign.is_feasible(inst)


def test_sparse_grows_until_feasible():
    inst = line([30, 30, 20, 20])
    delta = np.array([[0.1, 1.0], [0.1, 1.0], [1.0, 0.2], [1.0, 0.2]])
    y = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    assign, stats = solve_sparse(delta, y, inst, 2, EXACT.replace(tau_low=0.5, augment_fraction=0.0))
    # the cheapest vehicle repeats the overloaded one, so only full density works
    assert assign is not None and stats.augment_k == 2
    assert assign.is_feasible(inst)


@given(seed=st.integers(0, 2**31))
def test_restriction_monotonicity(seed):
    rng = np.random.default_rng(seed)
    n, k = 10, 3
    inst = random_instance(n, seed=seed)
    delta = rng.uniform(0, 2, (n, k))
    y = rng.dirichlet(np.full(k, 0.3), size=n)
    cfg = EXACT.replace(tau_low=0.2, tau_high=0.6)
    exact, _ = solve_exact(delta, inst, k, EXACT)
    sparse, _ = solve_sparse(delta, y, inst, k, cfg)
    fixed, _ = solve_fixed(delta, y, inst, k, cfg)
    if exact is None:
        assert sparse is None and fixed is None
        return
    assert sparse.objective(delta) >= exact.objective(delta) - 1e-9
    assert fixed.objective(delta) >= exact.objective(delta) - 1e-9
    assert sparse.is_feasible(inst) and fixed.is_feasible(inst)


def test_clusters_roundtrip():
    a = AssignmentMatrix([0, 0, 1], 2)
    assert assignment_to_clusters(a) == [{1, 2}, {3}]
    assert assignment_to_clusters(AssignmentMatrix([1, 1], 3)) == [set(), {1, 2}, set()]
    assert clusters_to_assignment(assignment_to_clusters(a), 3) == a
    with pytest.raises(InvalidArgumentError):
        clusters_to_assignment([{1}, {1, 2}], 2)


def test_assignment_matrix_helpers():
    a = AssignmentMatrix([0, 1, 1], 2)
    np.testing.assert_array_equal(a.to_matrix(), [[1, 0], [0, 1], [0, 1]])
    inst = line([10, 20, 30])
    np.testing.assert_allclose(a.loads(inst), [0.2, 1.0])
    assert a.is_feasible(inst)
    with pytest.raises(InvalidArgumentError):
        AssignmentMatrix([0, 2], 2)
