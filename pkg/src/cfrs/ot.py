"""Entropic optimal-transport relaxation of the capacitated assignment.

Vehicles carry unit mass, customer ``i`` demands ``q_i = d_i / Q`` and a
zero-cost slack row absorbs the surplus ``K - sum(q)``. The plan is found with
log-domain Sinkhorn iterations; ``sinkhorn_gradient`` back-propagates through
the unrolled iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleMarginalsError, InvalidArgumentError, NumericError

SLACK_DROP = 1e-9
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.001
    max_iterations: int = 1000
    tolerance: float = 1e-6
    # Newton polishing of the column potentials after this many plain sweeps;
    # None keeps pure alternating updates. Never used when iterates are recorded.
    newton_after: int | None = 50

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise InvalidArgumentError("tolerance must be positive")

    @classmethod
    def training(cls) -> "SinkhornConfig":
        return cls(epsilon=0.01, max_iterations=20, tolerance=1e-6, newton_after=None)

    @classmethod
    def inference(cls) -> "SinkhornConfig":
        return cls(epsilon=0.001, max_iterations=1000, tolerance=1e-6)


@dataclass
class TransportPlan:
    """Plan of shape (N+1, K); row 0 is the slack customer."""

    pi: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    iterations_used: int
    final_violation: float
    converged: bool
    # potentials per iteration, kept for the backward pass
    _trace: list = field(default_factory=list, repr=False)
    _active_rows: np.ndarray | None = field(default=None, repr=False)

    @property
    def slack(self) -> float:
        return float(self.row_marginals[0])


def build_marginals(q, k: int):
    """Return ``(row_marginals, col_marginals, slack_demand)`` for fleet size ``k``."""
    q = np.asarray(q, dtype=float)
    slack = k - q.sum()
    if slack < -1e-12:
        raise InfeasibleMarginalsError(f"fleet of {k} cannot carry total demand {q.sum():.6g}")
    slack = max(slack, 0.0)
    rows = np.concatenate([[slack], q])
    cols = np.ones(k)
    return rows, cols, float(slack)


def with_slack_row(delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    return np.vstack([np.zeros((1, delta.shape[1])), delta])


def _lse(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def _row_potentials(g, c, log_a, eps):
    return eps * (log_a - _lse((g[None, :] - c) / eps, axis=1))


def _newton_step(g, c, log_a, b, eps):
    """One damped Newton ascent step on the semi-dual in the column potentials."""
    a = np.exp(log_a)
    k = b.shape[0]

    def dual(gv):
        return float(a @ _row_potentials(gv, c, log_a, eps) + b @ gv)

    f = _row_potentials(g, c, log_a, eps)
    pi = np.exp((f[:, None] + g[None, :] - c) / eps)
    grad = b - pi.sum(axis=0)
    col = pi.sum(axis=0)
    hess = (np.diag(col) - (pi / a[:, None]).T @ pi) / eps
    # the all-ones direction is a null space of the dual; pin it
    hess += 1e-12 * np.trace(hess) * np.eye(k) + np.ones((k, k)) / k
    try:
        step = np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return g
    base = dual(g)
    slope = float(grad @ step)
    t = 1.0
    while t > 1e-10:
        cand = g + t * step
        if dual(cand) >= base + 1e-4 * t * slope:
            return cand
        t *= 0.5
    return g


def sinkhorn_log_domain(cost, row_marginals, col_marginals, config: SinkhornConfig | None = None,
                        record: bool = False) -> TransportPlan:
    """Solve ``min <C, P> + eps * sum P log P`` subject to the two marginal families.

    ``cost`` already contains the slack row (index 0). Rows with mass below
    1e-9 are removed before iterating and restored as zero rows.
    """
    config = config or SinkhornConfig()
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(row_marginals, dtype=float)
    b = np.asarray(col_marginals, dtype=float)
    if cost.shape != (a.shape[0], b.shape[0]):
        raise InvalidArgumentError(f"cost shape {cost.shape} does not match marginals")
    if not np.all(np.isfinite(cost)):
        raise NumericError("cost matrix contains non-finite entries")
    if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, b.sum()):
        raise InfeasibleMarginalsError("row and column marginals must carry equal mass")

    active = a >= SLACK_DROP
    c = cost[active]
    log_a = np.log(a[active])
    log_b = np.log(b)
    eps = config.epsilon

    g = np.zeros(b.shape[0])
    trace = [] if record else None
    violation = np.inf
    it = 0
    use_newton = config.newton_after is not None and not record
    for it in range(1, config.max_iterations + 1):
        if use_newton and it > config.newton_after:
            g = _newton_step(g, c, log_a, b, eps)
        f = _row_potentials(g, c, log_a, eps)
        g = eps * (log_b - _lse((f[:, None] - c) / eps, axis=0))
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise NumericError(f"non-finite Sinkhorn potentials at iteration {it}")
        if record:
            trace.append((f, g))
        # columns are exact after the g-update; only rows can be off
        log_pi = (f[:, None] + g[None, :] - c) / eps
        violation = float(np.max(np.abs(np.exp(log_pi).sum(axis=1) - np.exp(log_a))))
        if violation < config.tolerance:
            break

    pi_active = np.exp((f[:, None] + g[None, :] - c) / eps)
    violation = max(violation, float(np.max(np.abs(pi_active.sum(axis=0) - b))))
    pi = np.zeros_like(cost)
    pi[active] = pi_active
    return TransportPlan(
        pi=pi,
        row_marginals=a,
        col_marginals=b,
        iterations_used=it,
        final_violation=violation,
        converged=violation < config.tolerance,
        _trace=trace or [],
        _active_rows=active,
    )


def sinkhorn_gradient(cost, row_marginals, col_marginals, config: SinkhornConfig, upstream,
                      plan: TransportPlan | None = None) -> np.ndarray:
    """Reverse-mode derivative of ``sum(upstream * pi)`` with respect to ``cost``.

    Differentiates the exact sequence of iterations the forward pass ran. If
    ``plan`` was produced with ``record=True`` its trace is reused, otherwise
    the forward pass is re-run.
    """
    cost = np.asarray(cost, dtype=float)
    if plan is None or not plan._trace:
        plan = sinkhorn_log_domain(cost, row_marginals, col_marginals, config, record=True)
    active = plan._active_rows
    c = cost[active]
    eps = config.epsilon
    pi_bar = np.asarray(upstream, dtype=float)[active]
    trace = plan._trace
    log_a = np.log(plan.row_marginals[active])
    log_b = np.log(plan.col_marginals)

    f, g = trace[-1]
    pi = np.exp((f[:, None] + g[None, :] - c) / eps)
    w = pi_bar * pi / eps
    c_bar = -w
    f_bar = w.sum(axis=1)
    g_bar = w.sum(axis=0)

    for t in range(len(trace) - 1, -1, -1):
        f, g = trace[t]
        g_prev = trace[t - 1][1] if t > 0 else np.zeros_like(g)
        # g_t = eps*(log b - LSE_i((f_t - C)/eps)): column-softmax weights
        r = np.exp((f[:, None] + g[None, :] - c) / eps - log_b[None, :])
        f_bar = f_bar - r @ g_bar
        c_bar += r * g_bar[None, :]
        # f_t = eps*(log a - LSE_j((g_{t-1} - C)/eps)): row-softmax weights
        p = np.exp((f[:, None] + g_prev[None, :] - c) / eps - log_a[:, None])
        g_bar = -(p.T @ f_bar)
        c_bar += p * f_bar[:, None]
        f_bar = np.zeros_like(f_bar)

    out = np.zeros_like(cost)
    out[active] = c_bar
    return out


@dataclass
class SoftAssignment:
    """Row-stochastic N x K matrix of vehicle probabilities per customer."""

    y_hat: np.ndarray

    @property
    def shape(self):
        return self.y_hat.shape


def transport_to_probabilities(plan: TransportPlan, q=None) -> SoftAssignment:
    """Drop the slack row, divide by customer demand, then renormalize each row."""
    pi = plan.pi[1:]
    q = plan.row_marginals[1:] if q is None else np.asarray(q, dtype=float)
    y = pi / q[:, None]
    y = y / y.sum(axis=1, keepdims=True)
    return SoftAssignment(y)


def soft_assign(delta, q, k: int | None = None, config: SinkhornConfig | None = None):
    """Convenience: Delta (N x K) and demands -> (SoftAssignment, TransportPlan)."""
    delta = np.asarray(delta, dtype=float)
    k = delta.shape[1] if k is None else k
    rows, cols, _ = build_marginals(q, k)
    plan = sinkhorn_log_domain(with_slack_row(delta), rows, cols, config)
    return transport_to_probabilities(plan), plan


def _target_columns(target, n: int) -> np.ndarray:
    t = np.asarray(getattr(target, "assign", target))
    if t.ndim == 2:
        if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)):
            raise InvalidArgumentError("target rows must be one-hot")
        t = t.argmax(axis=1)
    if t.shape != (n,):
        raise InvalidArgumentError("target has wrong number of customers")
    return t.astype(int)


def cross_entropy_ot(y_hat, target) -> float:
    """Mean over customers of ``-log Yhat[i, target(i)]`` with a 1e-12 floor."""
    y = np.asarray(getattr(y_hat, "y_hat", y_hat), dtype=float)
    cols = _target_columns(target, y.shape[0])
    picked = y[np.arange(y.shape[0]), cols]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


def ot_loss_and_grad(delta, q, target, config: SinkhornConfig):
    """L_OT and dL_OT/dDelta through Sinkhorn, row normalization and the log loss."""
    delta = np.asarray(delta, dtype=float)
    n, k = delta.shape
    rows, cols, _ = build_marginals(q, k)
    cost = with_slack_row(delta)
    plan = sinkhorn_log_domain(cost, rows, cols, config, record=True)
    pi = plan.pi[1:]
    s = pi.sum(axis=1)
    y = pi / s[:, None]
    tcols = _target_columns(target, n)
    idx = np.arange(n)
    picked = y[idx, tcols]
    loss = float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))

    y_bar = np.zeros_like(y)
    live = picked > PROB_FLOOR
    y_bar[idx[live], tcols[live]] = -1.0 / (n * picked[live])
    # y = pi / rowsum(pi)
    pi_bar_rows = (y_bar - (y_bar * y).sum(axis=1, keepdims=True)) / s[:, None]
    pi_bar = np.vstack([np.zeros((1, k)), pi_bar_rows])
    grad = sinkhorn_gradient(cost, rows, cols, config, pi_bar, plan=plan)[1:]
    return loss, grad, plan


def entropy(pi) -> float:
    """Shannon entropy ``-sum P log P`` of a plan (zero entries contribute 0)."""
    p = np.asarray(pi, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))
