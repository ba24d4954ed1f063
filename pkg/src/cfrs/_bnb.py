"""Compiled depth-first branch-and-bound kernel for the capacitated assignment."""

import time

import numba
import numpy as np

INF = np.inf

STATUS_OPTIMAL = 0
STATUS_GAP = 1
STATUS_TIME = 2
STATUS_INFEASIBLE = 3
STATUS_NODES = 4

_CHECK_EVERY = 2048


@numba.njit(cache=True)
def node_bound(cost, dem, rem, qcap, lam, order, depth, partial):
    """max(Lagrangian bound, capacity-free bound) for the customers order[depth:]."""
    n, k = cost.shape
    lb_lag = partial
    lb_free = partial
    need = 0
    for idx in range(depth, n):
        i = order[idx]
        need += dem[i]
        best_lag = INF
        best_free = INF
        for j in range(k):
            c = cost[i, j]
            if c < INF and rem[j] >= dem[i]:
                if c < best_free:
                    best_free = c
                v = c + lam[j] * dem[i] / qcap
                if v < best_lag:
                    best_lag = v
        if best_free == INF:
            return INF
        lb_lag += best_lag
        lb_free += best_free
    total = 0
    for j in range(k):
        total += rem[j]
        lb_lag -= lam[j] * rem[j] / qcap
    if need > total:
        return INF
    return max(lb_lag, lb_free)


@numba.njit(cache=True)
def _lag_value(cost, dem, rem, qcap, lam, order, depth, partial, sub):
    """Lagrangian bound for fixed multipliers; fills the subgradient ``sub``."""
    n, k = cost.shape
    val = partial
    for j in range(k):
        sub[j] = -rem[j] / qcap
        val -= lam[j] * rem[j] / qcap
    for idx in range(depth, n):
        i = order[idx]
        best = INF
        arg = -1
        for j in range(k):
            c = cost[i, j]
            if c < INF and rem[j] >= dem[i]:
                v = c + lam[j] * dem[i] / qcap
                if v < best:
                    best = v
                    arg = j
        if arg < 0:
            return INF
        val += best
        sub[arg] += dem[i] / qcap
    return val


@numba.njit(cache=True)
def refined_bound(cost, dem, rem, qcap, lam, order, depth, partial, upper, iters, sub, trial):
    """Node bound with a few warm-started subgradient steps on the multipliers.

    ``lam`` is updated in place to the best multipliers seen.
    """
    k = cost.shape[1]
    base = node_bound(cost, dem, rem, qcap, lam, order, depth, partial)
    if base == INF or iters == 0 or not upper < INF:
        return base
    best = _lag_value(cost, dem, rem, qcap, lam, order, depth, partial, sub)
    for j in range(k):
        trial[j] = lam[j]
    val = best
    for _ in range(iters):
        if max(base, best) >= upper:
            break
        norm = 0.0
        for j in range(k):
            if trial[j] <= 0.0 and sub[j] < 0.0:
                sub[j] = 0.0
            norm += sub[j] * sub[j]
        if norm < 1e-18:
            break
        step = (upper - val) / norm
        for j in range(k):
            trial[j] = max(0.0, trial[j] + step * sub[j])
        val = _lag_value(cost, dem, rem, qcap, trial, order, depth, partial, sub)
        if val > best:
            best = val
            for j in range(k):
                lam[j] = trial[j]
    return max(base, best)


@numba.njit(cache=True)
def _now():
    with numba.objmode(t="float64"):
        t = time.perf_counter()
    return t


@numba.njit(cache=True)
def branch_and_bound(cost, dem, rem0, qcap, lam, order, best_obj, best_assign,
                     target_gap, node_limit, time_limit, lag_iters):
    """Search over assignments of ``order`` customers to vehicles.

    ``cost`` holds inf on forbidden edges. ``best_assign``/``best_obj`` carry an
    optional incumbent in and the final incumbent out. Returns
    ``(best_obj, lower_bound, nodes, status)``.
    """
    n, k = cost.shape
    start = _now()
    rem = rem0.copy()
    assign = -np.ones(n, dtype=np.int64)
    children = np.empty((n + 1, k), dtype=np.int64)
    nchild = np.zeros(n + 1, dtype=np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    bound_at = np.full(n + 1, INF)
    lam_at = np.zeros((n + 1, k))
    for j in range(k):
        lam_at[0, j] = lam[j]
    lam_tmp = np.empty(k)
    sub = np.empty(k)
    trial = np.empty(k)
    lb_pruned = INF
    nodes = 1
    partial = 0.0

    root = node_bound(cost, dem, rem, qcap, lam, order, 0, 0.0)
    if root == INF:
        return best_obj, INF, nodes, STATUS_INFEASIBLE
    bound_at[0] = root
    if n == 0:
        return 0.0, 0.0, nodes, STATUS_OPTIMAL
    if best_obj < INF and best_obj - root <= target_gap * max(abs(best_obj), 1e-12):
        lb = min(root, best_obj)
        return best_obj, lb, nodes, STATUS_OPTIMAL if root >= best_obj else STATUS_GAP

    depth = 0
    status = -1
    # children of the root
    i0 = order[0]
    cnt = 0
    for j in range(k):
        if cost[i0, j] < INF and rem[j] >= dem[i0]:
            pos = cnt
            while pos > 0 and cost[i0, children[0, pos - 1]] > cost[i0, j]:
                children[0, pos] = children[0, pos - 1]
                pos -= 1
            children[0, pos] = j
            cnt += 1
    nchild[0] = cnt
    ptr[0] = 0

    while True:
        if nodes % _CHECK_EVERY == 0:
            if node_limit > 0 and nodes >= node_limit:
                status = STATUS_NODES
                break
            if _now() - start > time_limit:
                status = STATUS_TIME
                break
        i = order[depth]
        if assign[i] >= 0:
            rem[assign[i]] += dem[i]
            partial -= cost[i, assign[i]]
            assign[i] = -1
        if ptr[depth] >= nchild[depth]:
            if depth == 0:
                break
            depth -= 1
            continue
        j = children[depth, ptr[depth]]
        ptr[depth] += 1
        if rem[j] < dem[i]:
            continue
        assign[i] = j
        rem[j] -= dem[i]
        partial += cost[i, j]
        nodes += 1

        if depth + 1 == n:
            obj = 0.0
            for c in range(n):
                obj += cost[c, assign[c]]
            if obj < best_obj:
                best_obj = obj
                for c in range(n):
                    best_assign[c] = assign[c]
            continue

        for jj in range(k):
            lam_tmp[jj] = lam_at[depth, jj]
        prune_at = INF
        if best_obj < INF:
            prune_at = best_obj - target_gap * max(abs(best_obj), 1e-12)
        b = refined_bound(cost, dem, rem, qcap, lam_tmp, order, depth + 1, partial,
                          prune_at, lag_iters, sub, trial)
        if b == INF:
            continue
        if best_obj < INF and best_obj - b <= target_gap * max(abs(best_obj), 1e-12):
            if b < best_obj:
                lb_pruned = min(lb_pruned, b)
            continue
        depth += 1
        bound_at[depth] = b
        for jj in range(k):
            lam_at[depth, jj] = lam_tmp[jj]
        inext = order[depth]
        cnt = 0
        for jj in range(k):
            if cost[inext, jj] < INF and rem[jj] >= dem[inext]:
                pos = cnt
                while pos > 0 and cost[inext, children[depth, pos - 1]] > cost[inext, jj]:
                    children[depth, pos] = children[depth, pos - 1]
                    pos -= 1
                children[depth, pos] = jj
                cnt += 1
        nchild[depth] = cnt
        ptr[depth] = 0

    if status == -1:
        if best_obj == INF:
            return best_obj, INF, nodes, STATUS_INFEASIBLE
        if lb_pruned < best_obj:
            return best_obj, lb_pruned, nodes, STATUS_GAP
        return best_obj, best_obj, nodes, STATUS_OPTIMAL

    # interrupted: open subtrees are bounded by their parents' bounds
    lb = lb_pruned
    for d in range(depth + 1):
        if ptr[d] < nchild[d] or d == depth:
            lb = min(lb, bound_at[d])
    if best_obj < INF:
        lb = min(lb, best_obj)
    return best_obj, lb, nodes, status
