"""Exact solvers for capacitated refueling-station placement with routing.

Two interchangeable exact algorithms over an expanded refueling network:
branch-and-cut on a time-separator covering formulation and
branch-cut-and-price on a route formulation, sharing one LP core and one
branch-and-bound kernel, plus instance generation, a brute-force oracle and
a benchmarking harness.
"""

from .bnb import Limits, SolveResult, bnb_run, select_branch_variable
from .config import SolverConfig, SolveTrace
from .cutsolver import (
    build_cf_root,
    primal_heuristic_csp,
    solve_cf,
    solve_cf_uncapacitated,
)
from .graphs import (
    CostedPath,
    DijkstraCounter,
    TimeSeparator,
    csp_exact,
    csp_larac,
    dijkstra,
    enumerate_time_feasible_paths,
    fractional_separator_mincut,
    hop_layer_separators,
    integer_time_separator,
    minimalize_separator,
)
from .instances import (
    GeneratorConfig,
    Instance,
    InstanceFormatError,
    compute_time_bounds,
    drop_infeasible_pairs,
    generate_instance,
    load_instance,
    parse_instance,
    save_instance,
)
from .lci import LiftedCover, balas_lift, minimal_cover
from .lp import LpModel, LpSolution, lp_solve
from .network import (
    GraphArc,
    GraphNode,
    NetworkGraph,
    OdPair,
    OdSubgraph,
    RangeParams,
    Solution,
    apply_refuel_surcharge,
    build_expanded_graph,
    build_od_subgraph,
    verify_solution,
)
from .oracle import OracleResult, brute_force_oracle
from .pathsolver import build_rmp, solve_pf

__all__ = [name for name in dir() if not name.startswith("_")]
