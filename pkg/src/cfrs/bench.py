"""End-to-end pipeline runs and corpus evaluation.

The pipeline is: seeds -> latent costs -> (Sinkhorn soft assignment) ->
capacitated assignment decode -> per-cluster TSP.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import fisher_jaikumar_solve, sweep_solve
from .cap import (
    AssignmentMatrix,
    CapSolveConfig,
    assignment_to_clusters,
    solve_exact,
    solve_fixed,
    solve_sparse,
)
from .costs import CostModelParams, LatentCostMatrix, euclidean_costs, pair_features, parametric_costs
from .exceptions import InfeasibleError, InvalidArgumentError
from .instance import Instance, fleet_lower_bound, read_instance
from .ot import SinkhornConfig, soft_assign
from .routing import EXACT_THRESHOLD, Solution, route_clusters
from .seeds import select_seeds

log = logging.getLogger(__name__)

DECODE_MODES = ("exact", "sparse", "fixed")
CSV_FIELDS = ["instance_id", "method", "decode", "k", "cap_obj", "cap_gap", "route_cost", "gap_pct", "time_s", "status"]


class EuclideanCosts:
    label = "euclid"

    def __call__(self, inst, seeds) -> LatentCostMatrix:
        return euclidean_costs(inst, seeds)


class ModelCosts:
    label = "model"

    def __init__(self, params: CostModelParams):
        self.params = params

    def __call__(self, inst, seeds) -> LatentCostMatrix:
        return parametric_costs(self.params, pair_features(inst, seeds))


@dataclass(frozen=True)
class PipelineConfig:
    cap: CapSolveConfig = field(default_factory=CapSolveConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig.inference)
    exact_threshold: int = EXACT_THRESHOLD


@dataclass
class BenchRecord:
    instance_id: str
    method: str
    decode: str
    k_used: int
    cap_objective: float
    cap_gap: float
    route_cost: float
    wall_time_s: float
    status: str
    gap_pct: float | None = None

    def to_row(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "method": self.method,
            "decode": self.decode,
            "k": self.k_used,
            "cap_obj": self.cap_objective,
            "cap_gap": self.cap_gap,
            "route_cost": self.route_cost,
            "gap_pct": "" if self.gap_pct is None else self.gap_pct,
            "time_s": self.wall_time_s,
            "status": self.status,
        }


@dataclass
class PipelineResult:
    solution: Solution
    record: BenchRecord
    assignment: AssignmentMatrix
    delta: np.ndarray
    y_hat: np.ndarray | None = None


def decode(delta, inst: Instance, k: int, mode: str, cap_config: CapSolveConfig,
           sinkhorn: SinkhornConfig):
    """Run one decode mode; returns ``(assignment | None, stats, y_hat | None)``."""
    if mode not in DECODE_MODES:
        raise InvalidArgumentError(f"unknown decode mode {mode!r}")
    delta = np.asarray(delta, dtype=float)
    if mode == "exact":
        assign, stats = solve_exact(delta, inst, k, cap_config)
        return assign, stats, None
    y_hat, _ = soft_assign(delta, inst.fractional_demands, k, sinkhorn)
    solver = solve_sparse if mode == "sparse" else solve_fixed
    assign, stats = solver(delta, y_hat, inst, k, cap_config)
    return assign, stats, y_hat.y_hat


def run_pipeline_full(inst: Instance, cost_provider=None, decode_mode: str = "exact",
                      config: PipelineConfig | None = None, k: int | None = None,
                      instance_id: str = "") -> PipelineResult:
    config = config or PipelineConfig()
    cost_provider = cost_provider or EuclideanCosts()
    start = time.perf_counter()
    k = fleet_lower_bound(inst) if k is None else int(k)
    if k > inst.n_customers:
        raise InvalidArgumentError(f"fleet size {k} exceeds the {inst.n_customers} customers")
    seeds = select_seeds(inst, k)
    delta = np.asarray(cost_provider(inst, seeds), dtype=float)
    assign, stats, y_hat = decode(delta, inst, k, decode_mode, config.cap, config.sinkhorn)
    if assign is None:
        raise InfeasibleError(f"instance {instance_id or '?'}: {decode_mode} decode with k={k} "
                              f"found no assignment (status {stats.status})")
    sol = route_clusters(inst, assignment_to_clusters(assign), config.exact_threshold)
    record = BenchRecord(
        instance_id=instance_id,
        method=f"cfrs-{getattr(cost_provider, 'label', 'custom')}",
        decode=decode_mode,
        k_used=k,
        cap_objective=stats.best_objective,
        cap_gap=stats.gap,
        route_cost=sol.total_cost,
        wall_time_s=time.perf_counter() - start,
        status=stats.status,
    )
    return PipelineResult(sol, record, assign, delta, y_hat)


def run_pipeline(inst: Instance, cost_provider=None, decode_mode: str = "exact",
                 config: PipelineConfig | None = None, k: int | None = None, instance_id: str = ""):
    """Returns ``(Solution, BenchRecord)``."""
    res = run_pipeline_full(inst, cost_provider, decode_mode, config, k, instance_id)
    return res.solution, res.record


def best_of_k(inst: Instance, cost_provider=None, decode_mode: str = "exact",
              config: PipelineConfig | None = None, instance_id: str = ""):
    """Run at K_min and K_min + 1 and keep the cheaper routing (ties favour K_min)."""
    k_min = fleet_lower_bound(inst)
    start = time.perf_counter()
    results = []
    for k in (k_min, k_min + 1):
        if k > inst.n_customers:
            continue
        try:
            results.append(run_pipeline(inst, cost_provider, decode_mode, config, k, instance_id))
        except InfeasibleError as exc:
            log.info("best_of_k: %s", exc)
    if not results:
        raise InfeasibleError(f"instance {instance_id or '?'}: infeasible at k={k_min} and k={k_min + 1}")
    sol, rec = min(results, key=lambda r: r[0].total_cost)
    rec.method = rec.method + "+bestk"
    rec.wall_time_s = time.perf_counter() - start
    return sol, rec


def gap(cost: float, reference: float) -> float:
    """Percentage gap of ``cost`` over ``reference``; negative when better."""
    if not reference > 0:
        raise InvalidArgumentError("reference cost must be positive")
    return 100.0 * (cost - reference) / reference


def mean_gap(records, references: dict) -> float:
    gaps = [gap(r.route_cost, references[r.instance_id]) for r in records]
    return float(np.mean(gaps)) if gaps else math.nan


def precision_recall_curve(y_hat, y_exact, thresholds) -> list[dict]:
    """Edge retention quality of ``y_hat >= tau`` against the exact assignment."""
    y = np.asarray(getattr(y_hat, "y_hat", y_hat), dtype=float)
    exact = np.asarray(getattr(y_exact, "assign", y_exact), dtype=int)
    n, k = y.shape
    if exact.shape != (n,) or exact.max(initial=0) >= k:
        raise InvalidArgumentError("soft and exact assignments disagree in shape")
    truth = np.zeros_like(y, dtype=bool)
    truth[np.arange(n), exact] = True
    rows = []
    for tau in thresholds:
        kept = y >= tau
        hits = int((kept & truth).sum())
        n_kept = int(kept.sum())
        confident = y.max(axis=1) > tau
        n_conf = int(confident.sum())
        correct = int((y.argmax(axis=1)[confident] == exact[confident]).sum())
        rows.append({
            "tau": float(tau),
            "retained": n_kept,
            "recall": hits / n,
            "precision": hits / n_kept if n_kept else None,
            "hard_assigned": n_conf,
            "hard_accuracy": correct / n_conf if n_conf else None,
        })
    return rows


# ---------------------------------------------------------------------------
# corpus runs


def load_corpus(directory) -> dict[str, Instance]:
    """Every ``*.json`` / ``*.vrp`` file in ``directory`` except support files."""
    directory = Path(directory)
    corpus = {}
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".json", ".vrp") or path.stem == "support":
            continue
        corpus[path.stem] = read_instance(path)
    if not corpus:
        raise InvalidArgumentError(f"no instances found in {directory}")
    return corpus


def run_method(inst: Instance, method: str, decode_mode: str = "exact", config: PipelineConfig | None = None,
               cost_provider=None, use_best_of_k: bool = False, instance_id: str = ""):
    """Dispatch one named method: ``cfrs``, ``sweep``, ``sweep-best`` or ``fj``."""
    config = config or PipelineConfig()
    start = time.perf_counter()
    if method == "cfrs":
        runner = best_of_k if use_best_of_k else run_pipeline
        return runner(inst, cost_provider, decode_mode, config, instance_id=instance_id)
    if method in ("sweep", "sweep-best"):
        sol = sweep_solve(inst, all_starts=method == "sweep-best", exact_threshold=config.exact_threshold)
    elif method == "fj":
        sol = fisher_jaikumar_solve(inst, config.cap, config.exact_threshold)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    rec = BenchRecord(instance_id, method, "-", sol.n_routes, math.nan, math.nan, sol.total_cost,
                      time.perf_counter() - start, "ok")
    return sol, rec


def _run_one(args):
    iid, inst, methods, decode_mode, config, cost_provider, use_best_of_k = args
    out = []
    for method in methods:
        try:
            sol, rec = run_method(inst, method, decode_mode, config, cost_provider, use_best_of_k, iid)
        except InfeasibleError as exc:
            rec = BenchRecord(iid, method, decode_mode, 0, math.nan, math.nan, math.nan, 0.0, "infeasible")
            log.warning("%s", exc)
        out.append(rec)
    return out


def run_corpus(corpus: dict, methods=("cfrs",), decode_mode: str = "exact", config: PipelineConfig | None = None,
               cost_provider=None, use_best_of_k: bool = False, references: dict | None = None,
               jobs: int = 1) -> list[BenchRecord]:
    """Evaluate ``methods`` on every instance; fills ``gap_pct`` against the references.

    Without explicit references the per-instance best route cost across the
    executed methods is used.
    """
    config = config or PipelineConfig()
    tasks = [(iid, inst, tuple(methods), decode_mode, config, cost_provider, use_best_of_k)
             for iid, inst in sorted(corpus.items())]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_one, tasks))
    else:
        chunks = [_run_one(t) for t in tasks]
    records = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r.instance_id, r.method))
    refs = dict(references or {})
    for r in records:
        if r.instance_id not in refs and math.isfinite(r.route_cost):
            best = min(x.route_cost for x in records
                       if x.instance_id == r.instance_id and math.isfinite(x.route_cost))
            refs[r.instance_id] = best
    for r in records:
        if math.isfinite(r.route_cost) and refs.get(r.instance_id, 0) > 0:
            r.gap_pct = gap(r.route_cost, refs[r.instance_id])
    return records


def mip_gap_sweep(corpus: dict, gap_limits, decode_mode: str = "exact", config: PipelineConfig | None = None,
                  cost_provider=None, references: dict | None = None) -> list[dict]:
    """Mean route gap and mean wall time per CAP target-gap setting."""
    config = config or PipelineConfig()
    runs = {}
    for g in gap_limits:
        cfg = PipelineConfig(cap=config.cap.replace(target_gap=g), sinkhorn=config.sinkhorn,
                             exact_threshold=config.exact_threshold)
        runs[g] = [run_pipeline(inst, cost_provider, decode_mode, cfg, instance_id=iid)[1]
                   for iid, inst in sorted(corpus.items())]
    refs = dict(references or {})
    for iid in corpus:
        refs.setdefault(iid, min(rec.route_cost for recs in runs.values() for rec in recs if rec.instance_id == iid))
    return [
        {
            "gap_limit": g,
            "mean_route_gap_pct": mean_gap(recs, refs),
            "mean_time_s": float(np.mean([r.wall_time_s for r in recs])),
        }
        for g, recs in runs.items()
    ]


def records_to_csv(records, path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.to_row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def rows_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_references(path) -> dict[str, float]:
    data = json.loads(Path(path).read_text())
    return {str(k): float(v) for k, v in data.items()}


def record_dict(record: BenchRecord) -> dict:
    return asdict(record)
