"""Benchmark grids over deviation tolerance and capacity, plus the
separation-variant comparison on uncapacitated instances.

Cells run independently (optionally in a thread pool, never inside a solve);
rows are emitted in plan order so results are reproducible for a fixed seed
apart from the wall-time column.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .config import SolverConfig
from .cutsolver import solve_cf, solve_cf_uncapacitated
from .instances import (
    GeneratorConfig,
    Instance,
    compute_time_bounds,
    drop_infeasible_pairs,
    format_results_csv,
    generate_instance,
    load_instance,
    mean_utilization_pct,
    results_row,
    solution_to_json,
)
from .pathsolver import solve_pf

PLOT_METRICS = ("gap_pct", "time_s", "utilization_pct", "obj")


@dataclass(frozen=True)
class BenchPlan:
    """One benchmark sweep: formulations x lambdas x kappas."""

    formulations: tuple[str, ...]
    lambdas: tuple[float, ...]
    kappas: tuple[float, ...]
    generator: Optional[GeneratorConfig] = None
    instance_path: Optional[str] = None
    time_limit_s: Optional[float] = None
    node_limit: Optional[int] = None
    seed: int = 0
    out_dir: str = "."
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.formulations or not self.lambdas or not self.kappas:
            raise ValueError("bench plan grids must be nonempty")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise ValueError("time limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node limit must be positive")
        if self.generator is None and self.instance_path is None:
            raise ValueError("bench plan needs a generator or an instance file")


def _cell_instance(plan: BenchPlan, lam: float, kappa: float) -> Instance:
    if plan.instance_path is not None:
        inst = load_instance(plan.instance_path)
        inst = compute_time_bounds(inst, lam)
    else:
        inst = generate_instance(replace(plan.generator, lam=lam, seed=plan.seed))
    inst = inst.with_uniform_capacity(kappa)
    reduced, _ = drop_infeasible_pairs(inst)
    return reduced


def solve_one(instance: Instance, formulation: str, config: SolverConfig):
    if formulation == "cf":
        return solve_cf(instance, config)
    if formulation == "pf":
        return solve_pf(instance, config)
    raise ValueError(f"unknown formulation {formulation!r}")


def run_bench(plan: BenchPlan) -> list[dict[str, str]]:
    """Run every cell, write results.csv plus one plot-data file per metric."""
    cells = [
        (form, lam, kappa)
        for lam in plan.lambdas
        for kappa in plan.kappas
        for form in plan.formulations
    ]

    def run_cell(cell):
        form, lam, kappa = cell
        config = SolverConfig(time_limit_s=plan.time_limit_s, node_limit=plan.node_limit)
        try:
            instance = _cell_instance(plan, lam, kappa)
            result = solve_one(instance, form, config)
            util = (
                mean_utilization_pct(instance, result.solution)
                if result.solution is not None
                else None
            )
            return results_row(form, lam, kappa, result, util)
        except Exception as exc:  # cell failures recorded, run continues
            return {
                "formulation": form,
                "lambda": str(lam),
                "kappa": "inf" if math.isinf(kappa) else str(kappa),
                "time_s": "---",
                "obj": f"error:{type(exc).__name__}",
                "nodes": "---",
                "gap_pct": "---",
                "utilization_pct": "---",
            }

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    os.makedirs(plan.out_dir, exist_ok=True)
    with open(os.path.join(plan.out_dir, "results.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_results_csv(rows))
    _write_plot_data(plan, rows)
    return rows


def _write_plot_data(plan: BenchPlan, rows: Sequence[dict[str, str]]) -> None:
    """Per-metric TSV series: one row per kappa, one column per (formulation, lambda)."""
    by_cell = {
        (r["formulation"], r["lambda"], r["kappa"]): r for r in rows
    }
    series = [
        (form, lam) for lam in plan.lambdas for form in plan.formulations
    ]
    for metric in PLOT_METRICS:
        path = os.path.join(plan.out_dir, f"plot_{metric}.tsv")
        with open(path, "w", encoding="utf-8") as fh:
            headers = ["kappa"] + [f"{form}_lam{lam:g}" for form, lam in series]
            fh.write("\t".join(headers) + "\n")
            for kappa in plan.kappas:
                kappa_text = "inf" if math.isinf(kappa) else str(kappa)
                cells = [
                    by_cell.get((form, str(lam), kappa_text), {}).get(metric, "---")
                    for form, lam in series
                ]
                fh.write("\t".join([kappa_text] + cells) + "\n")


def compare_separation(
    generator: GeneratorConfig,
    lambdas: Sequence[float],
    n_instances: int,
    out_dir: str,
    time_limit_s: Optional[float] = None,
) -> list[dict[str, str]]:
    """Both integer-separation variants on seeded uncapacitated instances.

    Reports objective, runtime and Dijkstra-call counts per cell; objectives
    must agree, the call counts are the point of the comparison.
    """
    rows: list[dict[str, str]] = []
    config = SolverConfig(time_limit_s=time_limit_s)
    for lam in lambdas:
        for k in range(n_instances):
            inst = generate_instance(
                replace(generator, lam=lam, seed=generator.seed + k, kappa=None)
            )
            inst, _ = drop_infeasible_pairs(inst)
            ours = solve_cf_uncapacitated(inst, "ours", config)
            base = solve_cf_uncapacitated(inst, "baseline", config)
            rows.append(
                {
                    "lambda": str(lam),
                    "seed": str(generator.seed + k),
                    "obj_ours": "---" if ours.objective is None else f"{ours.objective:g}",
                    "obj_baseline": "---" if base.objective is None else f"{base.objective:g}",
                    "time_ours_s": f"{ours.wall_time_s:.3f}",
                    "time_baseline_s": f"{base.wall_time_s:.3f}",
                    "dijkstra_ours": str(ours.dijkstra_calls),
                    "dijkstra_baseline": str(base.dijkstra_calls),
                }
            )
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "separation.csv")
    headers = list(rows[0].keys()) if rows else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(headers) + "\n")
        for row in rows:
            fh.write(",".join(row[h] for h in headers) + "\n")
    return rows
