import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cfrs.bench import run_pipeline
from cfrs.estimators import CFRSSolver, ParametricCostModel, SinkhornAssigner
from cfrs.instance import fleet_lower_bound, instance_to_dict, random_instance
from cfrs.ot import SinkhornConfig, soft_assign
from cfrs.routing import canonicalize


@pytest.fixture(scope="module")
def instances():
    return [random_instance(15, seed=s) for s in range(3)]


def test_params_roundtrip_through_clone():
    model = ParametricCostModel(hidden=4, steps=3, learning_rate=0.05)
    assert clone(model).get_params() == model.get_params()
    assert CFRSSolver(decode="fixed").get_params()["decode"] == "fixed"


def test_cost_model_fit_and_predict(instances):
    model = ParametricCostModel(hidden=4, steps=10).fit(instances)
    assert len(model.trace_.loss) == 10 and model.n_features_in_ == 4
    inst = instances[0]
    k = fleet_lower_bound(inst)
    delta = model.predict_costs(inst)
    assert delta.shape == (15, k) and np.all((delta > 0) & (delta < 2))
    y = model.predict_proba(inst)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-9)


def test_cost_model_accepts_explicit_targets(instances):
    targets = [np.zeros(15, dtype=int)] * 3
    model = ParametricCostModel(hidden=2, steps=2).fit(instances, targets)
    assert len(model.trace_.ot_loss) == 2


def test_unfitted_model_raises(instances):
    with pytest.raises(NotFittedError):
        ParametricCostModel().predict_costs(instances[0])


def test_sinkhorn_assigner_matches_function():
    rng = np.random.default_rng(0)
    delta = rng.uniform(0, 2, (6, 2))
    q = np.full(6, 0.2)
    got = SinkhornAssigner(epsilon=0.01).fit().transform((delta, q))
    want = soft_assign(delta, q, config=SinkhornConfig(epsilon=0.01))[0].y_hat
    np.testing.assert_allclose(got, want)
    many = SinkhornAssigner(epsilon=0.01).fit().transform([(delta, q), (delta[:3], q[:3])])
    assert len(many) == 2 and many[1].shape == (3, 2)


def test_sinkhorn_assigner_rejects_bad_input():
    from cfrs.exceptions import InvalidArgumentError

    with pytest.raises(InvalidArgumentError):
        SinkhornAssigner().fit().transform((np.ones((3, 2)), np.full(2, 0.5)))


def test_solver_matches_pipeline(instances):
    solver = CFRSSolver().fit()
    sols = solver.predict(instances)
    for inst, sol in zip(instances, sols):
        assert canonicalize(sol) == canonicalize(run_pipeline(inst)[0])
    assert solver.score(instances) == pytest.approx(-np.mean([s.total_cost for s in sols]))


def test_solver_accepts_dicts_and_single_instances(instances):
    solver = CFRSSolver(decode="sparse").fit()
    a = solver.predict(instance_to_dict(instances[0]))
    b = solver.predict(instances[0])
    assert len(a) == 1 and canonicalize(a[0]) == canonicalize(b[0])


def test_solver_fits_unfitted_cost_model(instances):
    solver = CFRSSolver(cost=ParametricCostModel(hidden=3, steps=2), decode="fixed").fit(instances)
    assert hasattr(solver.cost_model_, "params_")
    assert not hasattr(solver.cost, "params_")
    assert all(s.is_feasible(i) for s, i in zip(solver.predict(instances), instances))


def test_solver_rejects_unknown_cost():
    with pytest.raises(ValueError):
        CFRSSolver(cost="manhattan").fit()
