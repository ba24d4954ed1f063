"""Input checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError, NumericError
from .instance import Instance, instance_from_dict, read_instance


def check_instance(obj) -> Instance:
    """Coerce an Instance, a dict in the JSON schema, or a file path to an Instance."""
    if isinstance(obj, Instance):
        return obj
    if isinstance(obj, dict):
        return instance_from_dict(obj)
    if isinstance(obj, (str, Path)):
        if not Path(obj).is_file():
            raise InvalidArgumentError(f"no instance file at {obj}")
        return read_instance(Path(obj))
    raise InvalidArgumentError(f"cannot interpret {type(obj).__name__} as an instance")


def check_instances(X) -> list[Instance]:
    """One instance or an iterable of them, always returned as a list."""
    if isinstance(X, (Instance, dict, str, Path)):
        return [check_instance(X)]
    out = [check_instance(x) for x in X]
    if not out:
        raise InvalidArgumentError("need at least one instance")
    return out


def check_delta(delta, n: int | None = None, k: int | None = None) -> np.ndarray:
    """Finite, non-negative N x K cost matrix (shape checked when given)."""
    d = np.asarray(getattr(delta, "values", delta), dtype=float)
    if d.ndim != 2 or min(d.shape) < 1:
        raise InvalidArgumentError(f"cost matrix must be 2-D and non-empty, got shape {d.shape}")
    if (n is not None and d.shape[0] != n) or (k is not None and d.shape[1] != k):
        raise InvalidArgumentError(f"cost matrix shape {d.shape} != ({n}, {k})")
    if not np.all(np.isfinite(d)):
        raise NumericError("cost matrix has non-finite entries")
    if d.min() < 0:
        raise InvalidArgumentError("cost matrix has negative entries")
    return d


def check_soft_assignment(y_hat, atol: float = 1e-6) -> np.ndarray:
    """Row-stochastic N x K matrix."""
    y = np.asarray(getattr(y_hat, "y_hat", y_hat), dtype=float)
    if y.ndim != 2:
        raise InvalidArgumentError("soft assignment must be 2-D")
    if not np.all(np.isfinite(y)) or y.min() < -atol:
        raise InvalidArgumentError("soft assignment must be finite and non-negative")
    if not np.allclose(y.sum(axis=1), 1.0, atol=atol):
        raise InvalidArgumentError("soft assignment rows must sum to one")
    return y


def check_demands(q) -> np.ndarray:
    """Fractional demands in (0, 1]."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0 or np.any(q <= 0) or np.any(q > 1):
        raise InvalidArgumentError("fractional demands must be a non-empty vector in (0, 1]")
    return q
