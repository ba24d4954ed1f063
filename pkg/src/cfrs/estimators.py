"""scikit-learn style wrappers over the functional pipeline.

Samples are whole CVRP instances rather than feature rows, so these follow the
estimator conventions (constructor-only hyperparameters, ``get_params``,
trailing-underscore fitted state, ``check_is_fitted``) without claiming to
pass sklearn's tabular estimator checks.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .bench import EuclideanCosts, ModelCosts, PipelineConfig, best_of_k, run_pipeline_full
from .cap import CapSolveConfig
from .costs import (
    N_FEATURES,
    CostModelParams,
    TrainConfig,
    expert_batch,
    pair_features,
    parametric_costs,
    train_cost_model,
)
from .instance import fleet_lower_bound
from .ot import SinkhornConfig, soft_assign
from .seeds import select_seeds
from .validation import check_delta, check_demands, check_instance, check_instances


class ParametricCostModel(BaseEstimator):
    """Distance-feature MLP producing latent costs, trained through the OT layer.

    ``fit(X, y=None)`` takes a list of instances; without ``y`` the targets
    are exact CAP assignments on Euclidean costs at K_min.
    """

    def __init__(self, hidden=16, steps=200, learning_rate=0.1, with_bce=True, init_scale=0.1,
                 random_state=0):
        self.hidden = hidden
        self.steps = steps
        self.learning_rate = learning_rate
        self.with_bce = with_bce
        self.init_scale = init_scale
        self.random_state = random_state

    def fit(self, X, y=None):
        instances = check_instances(X)
        if y is None:
            batch = expert_batch(instances)
        else:
            batch = [(inst, select_seeds(inst, fleet_lower_bound(inst)), np.asarray(t))
                     for inst, t in zip(instances, y, strict=True)]
        params = CostModelParams.init(self.hidden, seed=self.random_state, scale=self.init_scale)
        config = TrainConfig(steps=self.steps, learning_rate=self.learning_rate, with_bce=self.with_bce)
        self.params_, self.trace_ = train_cost_model(params, batch, config)
        self.n_features_in_ = N_FEATURES
        return self

    def predict_costs(self, inst, k=None) -> np.ndarray:
        """Delta for one instance with greedy-decoded seeds (K_min unless ``k`` is given)."""
        check_is_fitted(self, "params_")
        inst = check_instance(inst)
        seeds = select_seeds(inst, fleet_lower_bound(inst) if k is None else k)
        return parametric_costs(self.params_, pair_features(inst, seeds)).values

    def predict_proba(self, inst, k=None, epsilon=0.001) -> np.ndarray:
        """Soft assignment of customers to vehicles."""
        inst = check_instance(inst)
        delta = self.predict_costs(inst, k)
        y_hat, _ = soft_assign(delta, inst.fractional_demands, config=SinkhornConfig(epsilon=epsilon))
        return y_hat.y_hat


def _is_matrix(x) -> bool:
    try:
        return np.asarray(x, dtype=float).ndim == 2
    except (TypeError, ValueError):
        return False


class SinkhornAssigner(TransformerMixin, BaseEstimator):
    """Maps ``(Delta, q)`` pairs to row-stochastic soft assignments. Stateless."""

    def __init__(self, epsilon=0.001, max_iterations=1000, tolerance=1e-6):
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def fit(self, X=None, y=None):
        self.config_ = SinkhornConfig(self.epsilon, self.max_iterations, self.tolerance)
        return self

    def transform(self, X):
        """``X`` is one ``(delta, q)`` pair or a sequence of them; returns matching Y-hat arrays."""
        check_is_fitted(self, "config_")
        single = len(X) == 2 and _is_matrix(X[0]) and not _is_matrix(X[1])
        pairs = [X] if single else list(X)
        out = []
        for delta, q in pairs:
            q = check_demands(q)
            delta = check_delta(delta, n=q.shape[0])
            out.append(soft_assign(delta, q, config=self.config_)[0].y_hat)
        return out[0] if single else out


class CFRSSolver(BaseEstimator):
    """Seeds, latent costs, CAP decode and per-cluster TSP behind ``predict``.

    ``cost`` is ``"euclid"``, a :class:`CostModelParams`, or a
    :class:`ParametricCostModel` (fitted on ``fit(X)`` if it is not yet).
    """

    def __init__(self, cost="euclid", decode="exact", epsilon=0.001, tau_high=0.99, tau_low=1e-4,
                 time_limit=100.0, target_gap=0.001, best_of_k=False, random_state=0):
        self.cost = cost
        self.decode = decode
        self.epsilon = epsilon
        self.tau_high = tau_high
        self.tau_low = tau_low
        self.time_limit = time_limit
        self.target_gap = target_gap
        self.best_of_k = best_of_k
        self.random_state = random_state

    def _provider(self, X=None):
        if isinstance(self.cost, str) and self.cost == "euclid":
            return EuclideanCosts()
        if isinstance(self.cost, CostModelParams):
            return ModelCosts(self.cost)
        if isinstance(self.cost, ParametricCostModel):
            model = self.cost
            try:
                check_is_fitted(model, "params_")
            except NotFittedError:
                if X is None:
                    raise
                model = clone(model).fit(X)
            self.cost_model_ = model
            return ModelCosts(model.params_)
        raise ValueError(f"unsupported cost provider {self.cost!r}")

    def fit(self, X=None, y=None):
        self.config_ = PipelineConfig(
            cap=CapSolveConfig(time_limit=self.time_limit, target_gap=self.target_gap, tau_high=self.tau_high,
                               tau_low=self.tau_low, rng_seed=self.random_state),
            sinkhorn=SinkhornConfig(epsilon=self.epsilon),
        )
        self.provider_ = self._provider(None if X is None else check_instances(X))
        return self

    def predict(self, X) -> list:
        """Solutions for one instance or a list of them (always returns a list)."""
        check_is_fitted(self, "config_")
        out = []
        for inst in check_instances(X):
            if self.best_of_k:
                sol, _ = best_of_k(inst, self.provider_, self.decode, self.config_)
            else:
                sol = run_pipeline_full(inst, self.provider_, self.decode, self.config_).solution
            out.append(sol)
        return out

    def score(self, X, y=None) -> float:
        """Negative mean route cost (higher is better)."""
        return -float(np.mean([s.total_cost for s in self.predict(X)]))
