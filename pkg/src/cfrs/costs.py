"""Customer-to-seed latent costs: geometric, or a small trainable distance-feature MLP.

The parametric provider maps four distance-only pair features through one
tanh hidden layer to ``Delta = 2 * sigmoid(out)``, so costs live in (0, 2)
and never depend on absolute coordinates. Training back-propagates the
entropic-OT cross-entropy through the unrolled Sinkhorn iterations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cap import CapSolveConfig, solve_exact
from .exceptions import InfeasibleError, NumericError
from .instance import Instance, fleet_lower_bound, pairwise_distances
from .ot import SinkhornConfig, ot_loss_and_grad
from .seeds import SeedSet, select_seeds

log = logging.getLogger(__name__)

N_FEATURES = 4


@dataclass
class LatentCostMatrix:
    values: np.ndarray
    upper_bound: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError("cost matrix must be N x K with N, K >= 1")
        if not np.all(np.isfinite(self.values)):
            raise NumericError("cost matrix has non-finite entries")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


def euclidean_costs(inst: Instance, seeds: SeedSet) -> LatentCostMatrix:
    """Delta[i, j] = distance from customer i to anchor j."""
    anchors = inst.coords[list(seeds.anchor_indices)]
    values = pairwise_distances(inst.customers, anchors)
    c = inst.coords
    if np.all((c >= 0.0) & (c <= 1.0)):
        bound = math.sqrt(2.0)
    else:
        bound = float(pairwise_distances(c).max())
    return LatentCostMatrix(values, upper_bound=bound)


def pair_features(inst: Instance, seeds: SeedSet) -> np.ndarray:
    """(N, K, 4) features: [d(i, seed_j), d(i, depot), d(seed_j, depot), q_i]."""
    anchors = list(seeds.anchor_indices)
    d = inst.distance_matrix()
    n, k = inst.n_customers, len(anchors)
    feats = np.empty((n, k, N_FEATURES))
    feats[:, :, 0] = d[1:][:, anchors]
    feats[:, :, 1] = d[1:, 0][:, None]
    feats[:, :, 2] = d[0, anchors][None, :]
    feats[:, :, 3] = inst.fractional_demands[:, None]
    return feats


@dataclass
class CostModelParams:
    """gamma, beta and a one-hidden-layer tanh MLP over pair features."""

    gamma: float
    beta: float
    w1: np.ndarray  # (hidden, 4)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @classmethod
    def init(cls, hidden: int = 16, seed: int = 0, scale: float = 0.1) -> "CostModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            gamma=0.0,
            beta=0.0,
            w1=rng.normal(0.0, scale, size=(hidden, N_FEATURES)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, scale, size=hidden),
            b2=0.0,
        )

    @classmethod
    def zeros(cls, hidden: int = 16) -> "CostModelParams":
        return cls(0.0, 0.0, np.zeros((hidden, N_FEATURES)), np.zeros(hidden), np.zeros(hidden), 0.0)

    @property
    def hidden(self) -> int:
        return self.b1.shape[0]

    @property
    def n_params(self) -> int:
        return self.to_vector().shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.gamma, self.beta], self.w1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def from_vector(cls, vec, hidden: int) -> "CostModelParams":
        vec = np.asarray(vec, dtype=float)
        h = hidden
        i = 2
        w1 = vec[i:i + h * N_FEATURES].reshape(h, N_FEATURES)
        i += h * N_FEATURES
        b1 = vec[i:i + h]
        w2 = vec[i + h:i + 2 * h]
        return cls(float(vec[0]), float(vec[1]), w1.copy(), b1.copy(), w2.copy(), float(vec[i + 2 * h]))

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "hidden": self.hidden,
            "weights": self.to_vector()[2:].tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CostModelParams":
        hidden = int(data.get("hidden", (len(data["weights"]) - 1) // (N_FEATURES + 2)))
        vec = np.concatenate([[data["gamma"], data["beta"]], data["weights"]])
        return cls.from_vector(vec, hidden)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CostModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _mlp_forward(params: CostModelParams, features):
    z = features @ params.w1.T + params.b1
    h = np.tanh(z)
    out = h @ params.w2 + params.b2
    return h, out


def parametric_costs(params: CostModelParams, features) -> LatentCostMatrix:
    features = np.asarray(features, dtype=float)
    _, out = _mlp_forward(params, features)
    delta = 2.0 * _sigmoid(out)
    if not np.all(np.isfinite(delta)):
        raise NumericError("parametric costs are not finite")
    return LatentCostMatrix(delta, upper_bound=2.0)


def logits_from_costs(delta, gamma: float, beta: float) -> np.ndarray:
    """s = -softplus(gamma) * Delta + beta."""
    return -softplus(gamma) * np.asarray(delta, dtype=float) + beta


def bce_with_logits(logits, target) -> float:
    """Mean elementwise binary cross-entropy of sigmoid(logits) against a 0/1 matrix."""
    s = np.asarray(logits, dtype=float)
    y = np.asarray(target, dtype=float)
    return float(np.mean(softplus(s) - y * s))


def one_hot(assign, k: int) -> np.ndarray:
    a = np.asarray(getattr(assign, "assign", assign), dtype=int)
    y = np.zeros((a.shape[0], k))
    y[np.arange(a.shape[0]), a] = 1.0
    return y


def sample_loss_and_grad(params: CostModelParams, features, q, target, config: SinkhornConfig,
                         with_bce: bool = True):
    """Loss L_OT (+ L_BCE) for one instance and its gradient as a parameter vector."""
    features = np.asarray(features, dtype=float)
    n, k, _ = features.shape
    h, out = _mlp_forward(params, features)
    sig = _sigmoid(out)
    delta = 2.0 * sig

    l_ot, delta_bar, _ = ot_loss_and_grad(delta, q, target, config)
    g_gamma = 0.0
    g_beta = 0.0
    l_bce = 0.0
    if with_bce:
        y = one_hot(target, k)
        sp = float(softplus(params.gamma))
        s = -sp * delta + params.beta
        l_bce = bce_with_logits(s, y)
        s_bar = (_sigmoid(s) - y) / (n * k)
        delta_bar = delta_bar - sp * s_bar
        g_gamma = float(np.sum(s_bar * -delta) * _sigmoid(params.gamma))
        g_beta = float(np.sum(s_bar))

    out_bar = delta_bar * 2.0 * sig * (1.0 - sig)
    g_w2 = np.einsum("nk,nkh->h", out_bar, h)
    g_b2 = float(out_bar.sum())
    z_bar = out_bar[:, :, None] * params.w2[None, None, :] * (1.0 - h * h)
    g_w1 = np.einsum("nkh,nkf->hf", z_bar, features)
    g_b1 = z_bar.sum(axis=(0, 1))
    grad = np.concatenate([[g_gamma, g_beta], g_w1.ravel(), g_b1, g_w2, [g_b2]])
    return l_ot, l_bce, grad


@dataclass
class TrainConfig:
    steps: int = 200
    learning_rate: float = 0.1
    with_bce: bool = True
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig.training)


@dataclass
class TrainTrace:
    loss: list = field(default_factory=list)
    ot_loss: list = field(default_factory=list)
    bce_loss: list = field(default_factory=list)


def prepare_batch(batch):
    """Turn ``(Instance, SeedSet, target)`` triples into ``(features, q, target)``."""
    return [(pair_features(inst, seeds), inst.fractional_demands, target) for inst, seeds, target in batch]


def expert_batch(instances, cap_config: CapSolveConfig | None = None) -> list:
    """``(inst, seeds, target)`` triples labelled by the exact CAP on Euclidean costs at K_min."""
    cap_config = cap_config or CapSolveConfig()
    batch = []
    for inst in instances:
        k = fleet_lower_bound(inst)
        seeds = select_seeds(inst, k)
        assign, _ = solve_exact(euclidean_costs(inst, seeds).values, inst, k, cap_config)
        if assign is None:
            raise InfeasibleError(f"no feasible expert label for {inst.name or 'instance'} at k={k}")
        batch.append((inst, seeds, assign.assign.copy()))
    return batch


def batch_loss_and_grad(params, prepared, config: TrainConfig):
    total = np.zeros(params.n_params)
    l_ot = l_bce = 0.0
    for features, q, target in prepared:
        a, b, g = sample_loss_and_grad(params, features, q, target, config.sinkhorn, config.with_bce)
        l_ot += a
        l_bce += b
        total += g
    m = len(prepared)
    return l_ot / m, l_bce / m, total / m


def train_cost_model(params: CostModelParams, batch, config: TrainConfig | None = None):
    """Plain gradient descent on mean(L_OT + [with_bce] * L_BCE) over a fixed batch.

    Returns the updated parameters and a trace with one entry per step, recorded
    before that step's update.
    """
    config = config or TrainConfig()
    prepared = prepare_batch(batch)
    trace = TrainTrace()
    vec = params.to_vector()
    hidden = params.hidden
    for step in range(config.steps):
        current = CostModelParams.from_vector(vec, hidden)
        try:
            l_ot, l_bce, grad = batch_loss_and_grad(current, prepared, config)
        except NumericError as exc:
            raise NumericError(f"non-finite loss at step {step}: {exc}") from exc
        loss = l_ot + (l_bce if config.with_bce else 0.0)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericError(f"non-finite loss at step {step}")
        trace.loss.append(loss)
        trace.ot_loss.append(l_ot)
        trace.bce_loss.append(l_bce)
        vec = vec - config.learning_rate * grad
        if step % 50 == 0:
            log.debug("step %d loss %.5f (ot %.5f)", step, loss, l_ot)
    return CostModelParams.from_vector(vec, hidden), trace
