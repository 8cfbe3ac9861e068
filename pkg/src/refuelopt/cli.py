"""Command-line entry point: solve, generate, bench, compare-separation."""

from __future__ import annotations

import argparse
import math
import os
import sys

from .bench import BenchPlan, compare_separation, run_bench, solve_one
from .config import SolverConfig
from .instances import (
    GeneratorConfig,
    compute_time_bounds,
    drop_infeasible_pairs,
    append_results_row,
    generate_instance,
    load_instance,
    mean_utilization_pct,
    results_row,
    save_instance,
    solution_to_json,
)


def _float_or_inf(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--formulation", choices=("cf", "pf"), default="cf")
    p.add_argument("--time-limit", type=float, metavar="SECONDS")
    p.add_argument("--node-limit", type=int, metavar="N")
    p.add_argument("--lambda", dest="lam", type=float, metavar="F")
    p.add_argument("--kappa", type=_float_or_inf, metavar="F")
    p.add_argument("--seed", type=int, default=0, metavar="N")
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--no-lci", action="store_true")
    p.add_argument("--no-larac", action="store_true")
    p.add_argument("--separation", choices=("ours", "baseline"), default="ours")


def _generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stations", type=int, default=12)
    p.add_argument("--terminals", type=int, default=6)
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--range", dest="r_max", type=float, default=0.6)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--refuel-time", type=float, default=0.0)


def _generator_config(args) -> GeneratorConfig:
    return GeneratorConfig(
        seed=args.seed,
        n_stations=args.stations,
        n_terminals=args.terminals,
        n_pairs=args.pairs,
        lam=args.lam if args.lam is not None else 0.3,
        kappa=None if args.kappa is None or math.isinf(args.kappa) else args.kappa,
        r_max=args.r_max,
        speed=args.speed,
        refuel_time=args.refuel_time,
    )


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        time_limit_s=args.time_limit,
        node_limit=args.node_limit,
        use_lci=not args.no_lci,
        use_larac=not args.no_larac,
        separation_variant=args.separation,
    )


def cmd_solve(args) -> int:
    if not args.instance:
        print("solve: --instance is required", file=sys.stderr)
        return 2
    instance = load_instance(args.instance)
    if args.lam is not None:
        instance = compute_time_bounds(instance, args.lam)
    if args.kappa is not None:
        instance = instance.with_uniform_capacity(args.kappa)
    instance, removed = drop_infeasible_pairs(instance)
    if removed:
        print(f"dropped {len(removed)} time-infeasible pair(s): {removed}")
    result = solve_one(instance, args.formulation, _solver_config(args))
    os.makedirs(args.out, exist_ok=True)
    util = None
    if result.solution is not None:
        util = mean_utilization_pct(instance, result.solution)
        with open(os.path.join(args.out, "solution.json"), "w", encoding="utf-8") as fh:
            fh.write(solution_to_json(instance, result.solution))
    lam = instance.lam if args.lam is None else args.lam
    kappa = args.kappa if args.kappa is not None else instance.uniform_capacity()
    row = results_row(args.formulation, lam, kappa, result, util)
    append_results_row(os.path.join(args.out, "results.csv"), row)
    print(
        f"status={result.status} formulation={row['formulation']} "
        f"lambda={row['lambda']} kappa={row['kappa']} time_s={row['time_s']} "
        f"obj={row['obj']} nodes={row['nodes']} gap_pct={row['gap_pct']} "
        f"utilization_pct={row['utilization_pct']}"
    )
    return 0


def cmd_generate(args) -> int:
    instance = generate_instance(_generator_config(args))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"instance_seed{args.seed}.json")
    save_instance(instance, path)
    print(f"wrote {path}")
    return 0


def _parse_grid(text: str) -> tuple[float, ...]:
    return tuple(_float_or_inf(part) for part in text.split(",") if part)


def cmd_bench(args) -> int:
    plan = BenchPlan(
        formulations=tuple(args.formulations.split(",")),
        lambdas=_parse_grid(args.lambdas),
        kappas=_parse_grid(args.kappas),
        generator=None if args.instance else _generator_config(args),
        instance_path=args.instance,
        time_limit_s=args.time_limit,
        node_limit=args.node_limit,
        seed=args.seed,
        out_dir=args.out,
        workers=args.workers,
    )
    rows = run_bench(plan)
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'results.csv')}")
    return 0


def cmd_compare_separation(args) -> int:
    rows = compare_separation(
        _generator_config(args),
        _parse_grid(args.lambdas),
        args.instances,
        args.out,
        time_limit_s=args.time_limit,
    )
    wins = sum(
        1 for r in rows if int(r["dijkstra_ours"]) < int(r["dijkstra_baseline"])
    )
    print(
        f"wrote {len(rows)} rows to {os.path.join(args.out, 'separation.csv')}; "
        f"fewer Dijkstra calls on {wins}/{len(rows)} instances"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refuelopt",
        description="Exact solvers for capacitated refueling-station placement with routing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one instance file")
    _shared_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_gen = sub.add_parser("generate", help="write a synthetic instance")
    _shared_flags(p_gen)
    _generator_flags(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_bench = sub.add_parser("bench", help="solve a (formulation, lambda, kappa) grid")
    _shared_flags(p_bench)
    _generator_flags(p_bench)
    p_bench.add_argument("--formulations", default="cf,pf")
    p_bench.add_argument("--lambdas", default="0.3")
    p_bench.add_argument("--kappas", default="1,2,inf")
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.set_defaults(func=cmd_bench)

    p_cmp = sub.add_parser(
        "compare-separation", help="compare integer separation variants"
    )
    _shared_flags(p_cmp)
    _generator_flags(p_cmp)
    p_cmp.add_argument("--lambdas", default="0.1,0.2,0.5")
    p_cmp.add_argument("--instances", type=int, default=5)
    p_cmp.set_defaults(func=cmd_compare_separation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
