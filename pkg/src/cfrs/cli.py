"""Command-line entry point: ``cfrs generate | solve | bench | train-cost | verify``.

Exit codes: 0 success, 1 failed self-check, 2 bad arguments or input files,
3 solver infeasibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    DECODE_MODES,
    EuclideanCosts,
    ModelCosts,
    PipelineConfig,
    best_of_k,
    load_corpus,
    load_references,
    mip_gap_sweep,
    records_to_csv,
    rows_to_csv,
    run_corpus,
    run_pipeline,
)
from .cap import CapSolveConfig
from .costs import CostModelParams, TrainConfig, expert_batch, train_cost_model
from .exceptions import InfeasibleError, InstanceParseError, InvalidArgumentError, NumericError
from .instance import generate_support, read_instance, sample_instance, write_instance, write_support
from .ot import SinkhornConfig

log = logging.getLogger("cfrs")

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    """Bad input detected after argument parsing; maps to exit code 2."""


def _existing_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"cannot read {path}")
    return p


def _load_params(path: str) -> CostModelParams:
    try:
        return CostModelParams.load(_existing_file(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a cost-model parameter file ({exc})") from exc


def _cost_provider(spec):
    if spec is None or spec == ["euclid"]:
        return EuclideanCosts()
    if spec[0] == "model" and len(spec) == 2:
        return ModelCosts(_load_params(spec[1]))
    raise UsageError("--cost takes 'euclid' or 'model PARAMS.json'")


def _pipeline_config(args) -> PipelineConfig:
    try:
        cap = CapSolveConfig(
            time_limit=args.time_limit,
            target_gap=args.mip_gap,
            tau_high=args.tau_high,
            tau_low=args.tau_low,
            rng_seed=args.seed,
        )
        sinkhorn = SinkhornConfig(epsilon=args.eps)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    return PipelineConfig(cap=cap, sinkhorn=sinkhorn)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--decode", choices=DECODE_MODES, default="exact")
    p.add_argument("--cost", nargs="+", metavar="euclid|model PARAMS", default=None,
                   help="latent cost provider (default euclid)")
    p.add_argument("--eps", type=float, default=0.001, help="Sinkhorn epsilon at inference")
    p.add_argument("--tau-high", type=float, default=0.99)
    p.add_argument("--tau-low", type=float, default=1e-4)
    p.add_argument("--time-limit", type=float, default=100.0, help="seconds per CAP solve")
    p.add_argument("--mip-gap", type=float, default=0.001, help="relative target gap of the CAP search")
    p.add_argument("--best-of-k", action="store_true", help="also try K_min + 1 vehicles")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="cfrs", description="Cluster-first route-second CVRP toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample a shared support and instances from it")
    g.add_argument("--support-size", type=int, default=3000)
    g.add_argument("--n", type=int, default=60)
    g.add_argument("--capacity", type=int, default=50)
    g.add_argument("--demand-lo", type=int, default=1)
    g.add_argument("--demand-hi", type=int, default=9)
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--central-depot", action="store_true", help="put the depot at (0.5, 0.5)")
    g.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("solve", parents=[common], help="solve one instance")
    s.add_argument("instance")
    _add_solver_flags(s)
    s.add_argument("--out", help="write the solution JSON here instead of stdout")

    b = sub.add_parser("bench", parents=[common], help="evaluate methods on a corpus directory")
    b.add_argument("corpus")
    b.add_argument("--methods", nargs="+", default=["cfrs", "sweep", "fj"],
                   choices=["cfrs", "sweep", "sweep-best", "fj"])
    _add_solver_flags(b)
    b.add_argument("--reference", help="JSON map instance_id -> reference cost")
    b.add_argument("--csv", help="write records here (default stdout)")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--mip-gap-sweep", nargs="+", type=float, metavar="GAP",
                   help="instead of the method table, report mean gap and time per CAP gap limit")

    t = sub.add_parser("train-cost", parents=[common], help="fit the parametric cost model on a corpus")
    t.add_argument("corpus")
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--with-bce", action=argparse.BooleanOptionalAction, default=True)
    t.add_argument("--max-instances", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="parameter JSON path")
    t.add_argument("--trace", help="loss trace CSV path (default: next to --out)")

    v = sub.add_parser("verify", parents=[common], help="run the oracle self-checks")
    v.add_argument("--quick", action="store_true", help="smaller problem counts")
    return parser


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        support = generate_support(args.support_size, args.seed)
        write_support(support, out / "support.json")
        rng = np.random.default_rng(args.seed)
        width = len(str(max(args.count - 1, 0)))
        for i in range(args.count):
            inst = sample_instance(support, args.n, args.capacity, args.demand_lo, args.demand_hi,
                                   seed=int(rng.integers(2**63)), central_depot=args.central_depot)
            write_instance(inst, out / f"inst_{i:0{width}d}.json")
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    print(f"wrote {args.count} instances and support.json to {out}", file=sys.stderr)
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(_existing_file(args.instance))
    config = _pipeline_config(args)
    provider = _cost_provider(args.cost)
    iid = Path(args.instance).stem
    if args.best_of_k:
        sol, rec = best_of_k(inst, provider, args.decode, config, instance_id=iid)
    else:
        sol, rec = run_pipeline(inst, provider, args.decode, config, instance_id=iid)
    log.info("k=%d cap_obj=%.6f status=%s time=%.2fs", rec.k_used, rec.cap_objective, rec.status, rec.wall_time_s)
    text = sol.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0


def cmd_bench(args) -> int:
    if not Path(args.corpus).is_dir():
        raise UsageError(f"cannot read corpus directory {args.corpus}")
    corpus = load_corpus(args.corpus)
    config = _pipeline_config(args)
    provider = _cost_provider(args.cost)
    refs = None
    if args.reference:
        try:
            refs = load_references(_existing_file(args.reference))
        except (ValueError, AttributeError) as exc:
            raise UsageError(f"{args.reference}: expected a JSON map of instance_id to cost") from exc
    if args.mip_gap_sweep:
        rows = mip_gap_sweep(corpus, args.mip_gap_sweep, args.decode, config, provider, refs)
        text = rows_to_csv(rows, args.csv)
    else:
        records = run_corpus(corpus, args.methods, args.decode, config, provider, args.best_of_k, refs, args.jobs)
        text = records_to_csv(records, args.csv)
    if not args.csv:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    if not Path(args.corpus).is_dir():
        raise UsageError(f"cannot read corpus directory {args.corpus}")
    if args.steps < 1 or args.hidden < 1 or args.max_instances < 1:
        raise UsageError("--steps, --hidden and --max-instances must be positive")
    corpus = load_corpus(args.corpus)
    instances = [corpus[k] for k in sorted(corpus)[: args.max_instances]]
    batch = expert_batch(instances)
    params = CostModelParams.init(hidden=args.hidden, seed=args.seed)
    config = TrainConfig(steps=args.steps, learning_rate=args.lr, with_bce=args.with_bce)
    params, trace = train_cost_model(params, batch, config)
    params.save(args.out)
    trace_path = Path(args.trace) if args.trace else Path(args.out).with_suffix(".trace.csv")
    with trace_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "ot_loss", "bce_loss"])
        for step, row in enumerate(zip(trace.loss, trace.ot_loss, trace.bce_loss)):
            writer.writerow([step, *row])
    print(json.dumps({
        "initial_ot_loss": trace.ot_loss[0],
        "final_ot_loss": trace.ot_loss[-1],
        "params": str(args.out),
        "trace": str(trace_path),
    }))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else EXIT_CHECK_FAILED


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "train-cost": cmd_train,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InstanceParseError, InvalidArgumentError) as exc:
        print(f"cfrs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"cfrs {args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericError as exc:
        print(f"cfrs {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
