import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfrs.exceptions import InstanceParseError, InvalidArgumentError
from cfrs.instance import (
    Isometry,
    apply_isometry,
    fleet_lower_bound,
    generate_support,
    instance_from_dict,
    instance_to_dict,
    pairwise_distances,
    random_instance,
    read_instance,
    read_support,
    sample_instance,
    write_instance,
    write_support,
)

from .conftest import make_instance


def test_support_of_3000_points_in_unit_square():
    s = generate_support(3000, seed=1)
    assert s.points.shape == (3000, 2)
    assert np.all((s.points >= 0) & (s.points <= 1))
    assert s.depot_index == 0


def test_minimal_support_and_determinism():
    assert len(generate_support(2, seed=7)) == 2
    np.testing.assert_array_equal(generate_support(100, 5).points, generate_support(100, 5).points)


def test_support_too_small():
    with pytest.raises(InvalidArgumentError):
        generate_support(1, seed=0)


def test_sample_instance_demands_and_ids():
    support = generate_support(3000, seed=1)
    inst = sample_instance(support, 100, capacity=50, demand_lo=1, demand_hi=9, seed=3)
    assert inst.n_customers == 100
    assert set(np.unique(inst.demands)) <= set(range(1, 10))
    assert len(set(inst.support_ids[1:].tolist())) == 100
    assert 0 not in inst.support_ids[1:]
    np.testing.assert_array_equal(inst.coords, support.points[inst.support_ids])


def test_sample_single_customer_and_determinism():
    support = generate_support(50, seed=2)
    one = sample_instance(support, 1, 50, 5, 5, seed=9)
    assert one.n_customers == 1 and one.demands[0] == 5
    assert sample_instance(support, 10, seed=4) == sample_instance(support, 10, seed=4)


def test_sample_central_depot():
    support = generate_support(50, seed=2)
    inst = sample_instance(support, 10, seed=4, central_depot=True)
    np.testing.assert_array_equal(inst.depot, [0.5, 0.5])
    assert inst.support_ids[0] == -1


def test_sample_too_many_customers():
    with pytest.raises(InvalidArgumentError):
        sample_instance(generate_support(10, seed=0), 10)


def test_instance_validation():
    with pytest.raises(InvalidArgumentError):
        make_instance([[0, 0], [1, 1]], [0])
    with pytest.raises(InvalidArgumentError):
        make_instance([[0, 0], [1, 1]], [51])
    with pytest.raises(InvalidArgumentError):
        make_instance([[0, 0]], [])


def test_instance_is_read_only():
    inst = random_instance(5, seed=0)
    with pytest.raises(ValueError):
        inst.coords[0, 0] = 3.0


@pytest.mark.parametrize("demands,expected", [([25, 25, 25, 25], 2), ([9] * 6, 2), ([50], 1), ([1], 1)])
def test_fleet_lower_bound(demands, expected):
    coords = np.zeros((len(demands) + 1, 2))
    assert fleet_lower_bound(make_instance(coords, demands)) == expected


def test_fleet_lower_bound_matches_explicit_sum():
    inst = random_instance(100, seed=11)
    total = sum(int(d) for d in inst.demands)
    assert fleet_lower_bound(inst) == (total + 49) // 50


@given(st.lists(st.integers(1, 50), min_size=1, max_size=60))
def test_fleet_bound_brackets_fractional_demand(demands):
    inst = make_instance(np.zeros((len(demands) + 1, 2)), demands)
    k = fleet_lower_bound(inst)
    assert inst.fractional_demands.sum() <= k + 1e-12
    assert k - inst.fractional_demands.sum() < 1


def test_identity_isometry_is_bitwise():
    inst = random_instance(10, seed=1)
    np.testing.assert_array_equal(apply_isometry(inst, Isometry()).coords, inst.coords)


def test_quarter_turn():
    assert np.allclose(Isometry(rotation_angle=math.pi / 2).apply([[1.0, 0.0]]), [[0.0, 1.0]], atol=1e-12)


def test_isometry_invert_roundtrip():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(20, 2))
    for _ in range(20):
        g = Isometry.random(rng)
        np.testing.assert_allclose(g.invert(g.apply(pts)), pts, atol=1e-12)


def test_isometries_preserve_distances():
    rng = np.random.default_rng(1)
    for s in range(20):
        inst = random_instance(20, seed=s)
        d = inst.distance_matrix()
        for _ in range(50):
            moved = apply_isometry(inst, Isometry.random(rng))
            np.testing.assert_allclose(moved.distance_matrix(), d, atol=1e-9)
            np.testing.assert_array_equal(moved.demands, inst.demands)
            assert moved.capacity == inst.capacity


def test_json_roundtrip(tmp_path):
    support = generate_support(500, seed=3)
    inst = sample_instance(support, 50, seed=1)
    write_instance(inst, tmp_path / "a.json")
    again = read_instance(tmp_path / "a.json")
    assert again == inst
    write_instance(again, tmp_path / "b.json")
    assert read_instance(tmp_path / "b.json") == again
    assert instance_from_dict(instance_to_dict(inst)) == inst


def test_minimal_json_text():
    inst = read_instance('{"coords": [[0, 0], [3, 4]], "demands": [2], "capacity": 5, "support_ids": null}')
    assert inst.n_customers == 1 and inst.capacity == 5


def test_json_schema_violation():
    with pytest.raises(InstanceParseError):
        read_instance('{"coords": [[0, 0], [3, 4]], "capacity": 5}')
    with pytest.raises(InstanceParseError):
        read_instance('{"coords": [[0, 0], [3, 4]], "demands": [-1], "capacity": 5}')


VRP = """NAME : tiny
TYPE : CVRP
DIMENSION : 4
EDGE_WEIGHT_TYPE : EUC_2D
CAPACITY : 10
NODE_COORD_SECTION
1 0 0
2 30 40
3 -10 5
4 7 7
DEMAND_SECTION
1 0
2 3
3 4
4 5
DEPOT_SECTION
1
-1
EOF
"""


def test_vrplib_fixture():
    inst = read_instance(VRP)
    assert inst.n_customers == 3 and inst.capacity == 10
    np.testing.assert_array_equal(inst.demands, [3, 4, 5])
    # raw coordinates, plain Euclidean distance
    assert inst.distance_matrix()[0, 1] == 50.0


def test_vrplib_depot_not_first():
    text = VRP.replace("DEPOT_SECTION\n1\n", "DEPOT_SECTION\n3\n").replace("3 4\n4 5", "3 0\n4 5").replace(
        "1 0\n2 3", "1 4\n2 3")
    inst = read_instance(text)
    np.testing.assert_array_equal(inst.depot, [-10, 5])
    np.testing.assert_array_equal(inst.demands, [4, 3, 5])


def test_vrplib_non_positive_demand_names_line():
    bad = VRP.replace("3 4\n", "3 0\n")
    with pytest.raises(InstanceParseError) as err:
        read_instance(bad)
    assert err.value.line == 14
    assert "line 14" in str(err.value)


def test_vrplib_rejections():
    with pytest.raises(InstanceParseError, match="CAPACITY"):
        read_instance(VRP.replace("CAPACITY : 10\n", ""))
    with pytest.raises(InstanceParseError, match="EXPLICIT"):
        read_instance(VRP.replace("EUC_2D", "EXPLICIT"))
    with pytest.raises(InstanceParseError, match="malformed"):
        read_instance(VRP.replace("4 7 7", "4 7"))
    with pytest.raises(InstanceParseError):
        read_instance(VRP.replace("DEPOT_SECTION", "EDGE_WEIGHT_SECTION"))


def test_support_roundtrip(tmp_path):
    s = generate_support(20, seed=4)
    write_support(s, tmp_path / "support.json")
    back = read_support(tmp_path / "support.json")
    np.testing.assert_array_equal(back.points, s.points)
    assert back.rng_seed == 4


def test_pairwise_distances_hand_values():
    d = pairwise_distances([[0, 0], [3, 4]], [[0, 0]])
    np.testing.assert_allclose(d, [[0.0], [5.0]])
