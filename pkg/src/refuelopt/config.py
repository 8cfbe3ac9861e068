"""Solver configuration and optional instrumentation shared by both solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class SolverConfig:
    """Limits and feature toggles for the exact solvers.

    The cut solver honors the LCI / fractional-separation / heuristic
    toggles and the separation variant for the uncapacitated run; the path
    solver honors the LCI / LARAC / early-termination toggles.
    """

    time_limit_s: Optional[float] = None
    node_limit: Optional[int] = None
    use_lci: bool = True
    use_fractional_separation: bool = True
    use_heuristic: bool = True
    use_larac: bool = True
    early_termination: bool = True
    separation_variant: str = "ours"  # ours | baseline


@dataclass
class PfNodeTrace:
    """Pricing outcome of one path-solver node (for soundness checks)."""

    node_id: int
    converged: bool
    early: bool
    rmp_value: float
    lagrangian: Optional[float]
    lagrangian_max: Optional[float]
    sigma: dict[int, float]
    node_costs: dict[int, dict[str, float]]
    forbidden: dict[int, frozenset[tuple[str, str]]]


@dataclass
class SolveTrace:
    """Optional recorder of everything a solve emitted, for validity audits."""

    separators: list[tuple[int, frozenset[str]]] = field(default_factory=list)
    lcis: list[tuple[str, dict[int, int], int]] = field(default_factory=list)
    heuristic_runs: list[dict] = field(default_factory=list)
    pf_nodes: list[PfNodeTrace] = field(default_factory=list)
    columns: list[tuple[int, tuple[str, ...]]] = field(default_factory=list)
