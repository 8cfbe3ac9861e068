"""Branch-and-cut on the station-cut formulation.

The LP carries one global open/close variable per station and one local
usage variable per (pair, station in the pair's subgraph). Coverage rows
over time-separators are generated lazily: integer candidates are rejected
until every pair owns a time-feasible path through its active stations;
fractional solutions are separated once per node through the min-cut
routine, together with lifted cover inequalities. The uncapacitated variant
keeps only the station variables and integer separation, in either the
two-Dijkstra flavor or the trivial-complement baseline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .bnb import (
    BnbNode,
    Incumbent,
    Limits,
    Relaxation,
    SolveResult,
    Tree,
    bnb_run,
    select_branch_variable,
)
from .config import SolverConfig, SolveTrace
from .graphs import (
    INF,
    DijkstraCounter,
    active_adjacency,
    baseline_integer_separator,
    csp_exact,
    dijkstra_adjacency,
    extract_path,
    fractional_separator_mincut,
    hop_layer_separators,
    integer_time_separator,
)
from .instances import Instance
from .lci import build_lifted_cover
from .lp import INT_TOL, LpModel, LpSolution, lp_solve
from .network import OdSubgraph, Solution, station_loads, verify_solution

SATURATION_TOL = 1e-6
VIOLATION_TOL = 1e-6


@dataclass
class CfState:
    """LP state of one cut-formulation solve."""

    instance: Instance
    verify_instance: Instance
    subs: list[OdSubgraph]
    model: LpModel
    x_col: dict[str, int]
    z_col: dict[tuple[int, str], int]
    uncapacitated: bool
    config: SolverConfig
    counter: DijkstraCounter
    trace: Optional[SolveTrace] = None
    coverage_seen: set = field(default_factory=set)
    lci_seen: set = field(default_factory=set)
    stats: dict = field(default_factory=lambda: {
        "integer_cuts": 0,
        "fractional_cuts": 0,
        "lci_cuts": 0,
        "heuristic_calls": 0,
        "heuristic_solutions": 0,
    })

    def z_values(self, lp: LpSolution, q: int) -> dict[str, float]:
        if self.uncapacitated:
            return {v: lp.value(self.x_col[v]) for v in self.subs[q].stations}
        return {
            v: lp.value(self.z_col[(q, v)]) for v in self.subs[q].stations
        }

    def record_separator(self, q: int, stations: frozenset[str]) -> None:
        if self.trace is not None:
            self.trace.separators.append((q, stations))

    def coverage_key(self, q: int, stations: frozenset[str]):
        return stations if self.uncapacitated else (q, stations)

    def add_coverage_row(self, q: int, stations: frozenset[str], tag: str) -> bool:
        key = self.coverage_key(q, stations)
        if key in self.coverage_seen:
            return False
        self.coverage_seen.add(key)
        if self.uncapacitated:
            coeffs = {self.x_col[v]: 1.0 for v in stations}
        else:
            coeffs = {self.z_col[(q, v)]: 1.0 for v in stations}
        self.model.add_row(coeffs, ">=", 1.0, name=f"{tag}[{q}]")
        self.record_separator(q, stations)
        return True


def build_cf_root(
    instance: Instance,
    config: Optional[SolverConfig] = None,
    counter: Optional[DijkstraCounter] = None,
    trace: Optional[SolveTrace] = None,
    uncapacitated: bool = False,
) -> CfState:
    """Root LP: station columns, capacity and strong-linking rows, hop-layer cuts.

    Local usage columns exist only for stations inside the pair's subgraph,
    which keeps the LP small. The uncapacitated variant carries station
    columns only and covers separators directly with them.
    """
    config = config or SolverConfig()
    counter = counter or DijkstraCounter()
    model = LpModel()
    subs = instance.subgraphs()
    x_col = {
        v: model.add_column(instance.costs[v], 0.0, 1.0, is_integer=True, name=f"x[{v}]")
        for v in instance.graph.stations
    }
    z_col: dict[tuple[int, str], int] = {}
    verify_instance = instance
    if uncapacitated:
        verify_instance = instance.with_uniform_capacity(INF)
    else:
        for q, sub in enumerate(subs):
            for v in sorted(sub.stations):
                z_col[(q, v)] = model.add_column(
                    0.0, 0.0, 1.0, is_integer=True, name=f"z[{q},{v}]"
                )
        for v in instance.graph.stations:
            kappa = instance.capacities[v]
            if math.isinf(kappa):
                continue
            coeffs = {
                z_col[(q, v)]: instance.od_pairs[q].f
                for q, sub in enumerate(subs)
                if v in sub.stations
            }
            if not coeffs:
                continue
            coeffs[x_col[v]] = -kappa
            model.add_row(coeffs, "<=", 0.0, name=f"cap[{v}]")
        for (q, v), col in z_col.items():
            model.add_row({col: 1.0, x_col[v]: -1.0}, "<=", 0.0, name=f"link[{q},{v}]")
    state = CfState(
        instance=instance,
        verify_instance=verify_instance,
        subs=subs,
        model=model,
        x_col=x_col,
        z_col=z_col,
        uncapacitated=uncapacitated,
        config=config,
        counter=counter,
        trace=trace,
    )
    for q, sub in enumerate(subs):
        for sep in hop_layer_separators(sub):
            state.add_coverage_row(q, sep.stations, "layer")
    return state


# ---------------------------------------------------------------------------
# separation
# ---------------------------------------------------------------------------


def _pair_locally_integral(state: CfState, lp: LpSolution, q: int) -> bool:
    sub = state.subs[q]
    for v in sub.stations:
        if abs(lp.value(state.x_col[v]) - round(lp.value(state.x_col[v]))) > INT_TOL:
            return False
        if not state.uncapacitated:
            zv = lp.value(state.z_col[(q, v)])
            if abs(zv - round(zv)) > INT_TOL:
                return False
    return True


def cf_separate_integer(
    state: CfState, lp: LpSolution, pairs: Optional[Sequence[int]] = None
) -> int:
    """Lazy coverage rows for pairs whose local assignment is binary."""
    added = 0
    for q in pairs if pairs is not None else range(len(state.subs)):
        sub = state.subs[q]
        active = {v: round(z) for v, z in state.z_values(lp, q).items()}
        if state.config.separation_variant == "baseline":
            sep = baseline_integer_separator(sub, active, state.counter)
        else:
            sep = integer_time_separator(sub, active, state.counter)
        if sep is None:
            continue
        if state.add_coverage_row(q, sep.stations, "sep"):
            added += 1
            state.stats["integer_cuts"] += 1
    return added


def cf_separate_fractional(
    state: CfState, lp: LpSolution, skip: Sequence[int] = ()
) -> int:
    """One min-cut round: add every pair's minimum separator lighter than 1."""
    added = 0
    skip_set = set(skip)
    for q, sub in enumerate(state.subs):
        if q in skip_set or sub.empty:
            continue
        weights = state.z_values(lp, q)
        sep, weight = fractional_separator_mincut(sub, weights, state.counter)
        if weight < 1.0 - VIOLATION_TOL and sep.stations:
            if state.add_coverage_row(q, sep.stations, "frac"):
                added += 1
                state.stats["fractional_cuts"] += 1
    return added


def cf_separate_lci(state: CfState, lp: LpSolution) -> int:
    """Lifted cover rows for saturated stations, if violated by the LP point."""
    if state.uncapacitated:
        return 0
    instance = state.instance
    demands = {q: p.f for q, p in enumerate(instance.od_pairs)}
    added = 0
    for v in instance.graph.stations:
        kappa = instance.capacities[v]
        if math.isinf(kappa):
            continue
        zbar = {
            q: min(1.0, max(0.0, lp.value(state.z_col[(q, v)])))
            for q, sub in enumerate(state.subs)
            if v in sub.stations
        }
        if not zbar:
            continue
        used = sum(demands[q] * z for q, z in zbar.items())
        xv = lp.value(state.x_col[v])
        if used < kappa * xv - SATURATION_TOL or used <= SATURATION_TOL:
            continue
        cover = build_lifted_cover(v, zbar, demands, kappa)
        if cover is None or (v, cover.cover) in state.lci_seen:
            continue
        lhs = sum(zbar[q] for q in cover.cover) + sum(
            a * zbar[q] for q, a in cover.alpha.items() if a
        )
        if lhs <= cover.rhs + VIOLATION_TOL:
            continue
        coeffs = {state.z_col[(q, v)]: 1.0 for q in cover.cover}
        for q, a in cover.alpha.items():
            if a:
                coeffs[state.z_col[(q, v)]] = float(a)
        state.model.add_row(coeffs, "<=", float(cover.rhs), name=f"lci[{v}]")
        state.lci_seen.add((v, cover.cover))
        if state.trace is not None:
            full = {q: 1 for q in cover.cover}
            full.update({q: a for q, a in cover.alpha.items()})
            state.trace.lcis.append((v, full, cover.rhs))
        added += 1
        state.stats["lci_cuts"] += 1
    return added


# ---------------------------------------------------------------------------
# primal heuristic
# ---------------------------------------------------------------------------


def heuristic_station_costs(
    sub: OdSubgraph,
    f_q: float,
    loads: Mapping[str, float],
    capacities: Mapping[str, float],
    z_bar: Mapping[str, float],
) -> dict[str, float]:
    """Station prices for the routing step of the primal heuristic.

    A station is unusable once the pair no longer fits, free once some other
    pair already pays for it, and otherwise priced by how little the LP
    wants it.
    """
    costs: dict[str, float] = {}
    for v in sub.stations:
        if f_q + loads.get(v, 0.0) > capacities[v] + 1e-9:
            costs[v] = INF
        elif loads.get(v, 0.0) > 0:
            costs[v] = 0.0
        else:
            costs[v] = 1.0 - min(1.0, max(0.0, z_bar.get(v, 0.0)))
    return costs


def heuristic_resolve_infeasibility(
    instance: Instance,
    q: int,
    path: tuple[str, ...],
    loads: dict[str, float],
    routes: dict[int, tuple[str, ...]],
    station_fifo: dict[str, deque],
    od_queue: deque,
    eviction_box: list[int],
    eviction_cap: int,
) -> bool:
    """Commit a candidate route, evicting earlier pairs FIFO where it does not fit.

    Evicted pairs lose their whole route (loads decremented along all of its
    stations) and rejoin the OD queue. Returns False when the eviction cap is
    breached or a station cannot fit the pair even when empty.
    """
    f_q = instance.od_pairs[q].f
    for v in path[1:-1]:
        kappa = instance.capacities[v]
        while loads.get(v, 0.0) + f_q > kappa + 1e-9:
            evicted = None
            while station_fifo[v]:
                cand = station_fifo[v].popleft()
                if cand in routes and v in routes[cand][1:-1]:
                    evicted = cand
                    break
            if evicted is None:
                return False
            gone = routes.pop(evicted)
            f_e = instance.od_pairs[evicted].f
            for w in gone[1:-1]:
                loads[w] = loads.get(w, 0.0) - f_e
            od_queue.append(evicted)
            eviction_box[0] += 1
            if eviction_box[0] > eviction_cap:
                return False
        loads[v] = loads.get(v, 0.0) + f_q
        station_fifo[v].append(q)
    routes[q] = path
    return True


def primal_heuristic_csp(
    instance: Instance,
    x_bar: Mapping[str, float],
    z_bar: Mapping[tuple[int, str], float],
    subs: Optional[Sequence[OdSubgraph]] = None,
    trace: Optional[SolveTrace] = None,
) -> Optional[Solution]:
    """Route pairs one by one along LP-guided constrained shortest paths.

    Processes an OD queue; when every time-feasible path of a pair is blocked
    by full stations, a least-blocked path is taken instead and earlier pairs
    are evicted FIFO until it fits. Total evictions are capped at five per
    pair; on breach (or an unroutable pair) the heuristic gives up.
    """
    subs = subs if subs is not None else instance.subgraphs()
    n = len(instance.od_pairs)
    od_queue: deque = deque(range(n))
    station_fifo: dict[str, deque] = {v: deque() for v in instance.graph.stations}
    loads: dict[str, float] = {v: 0.0 for v in instance.graph.stations}
    routes: dict[int, tuple[str, ...]] = {}
    eviction_box = [0]
    eviction_cap = 5 * max(1, n)
    run_log = {"returned": False, "evictions": 0}
    if trace is not None:
        trace.heuristic_runs.append(run_log)

    while od_queue:
        q = od_queue.popleft()
        sub = subs[q]
        pair = instance.od_pairs[q]
        costs = heuristic_station_costs(
            sub, pair.f, loads, instance.capacities,
            {v: z_bar.get((q, v), 0.0) for v in sub.stations},
        )
        path = csp_exact(sub, costs, pair.u)
        if path is None:
            # every time-feasible path is blocked: price blocked stations at a
            # large finite value so the least-blocked path surfaces, then evict
            big = float(len(sub.stations) + 1)
            relaxed = {v: (big if costs[v] == INF else costs[v]) for v in costs}
            path = csp_exact(sub, relaxed, pair.u)
            if path is None:
                run_log["evictions"] = eviction_box[0]
                return None
        ok = heuristic_resolve_infeasibility(
            instance, q, path.nodes, loads, routes, station_fifo,
            od_queue, eviction_box, eviction_cap,
        )
        if not ok:
            run_log["evictions"] = eviction_box[0]
            return None
    open_stations = frozenset(v for v, k in loads.items() if k > 1e-9)
    objective = sum(instance.costs[v] for v in open_stations)
    solution = Solution(
        open_stations=open_stations,
        routes=dict(routes),
        objective=objective,
        loads=station_loads(instance, routes),
    )
    run_log["returned"] = True
    run_log["evictions"] = eviction_box[0]
    return solution


# ---------------------------------------------------------------------------
# search callbacks
# ---------------------------------------------------------------------------


class _CfCallbacks:
    def __init__(self, state: CfState):
        self.state = state

    def solve_relaxation(self, node: BnbNode, tree: Tree) -> Relaxation:
        model = self.state.model
        saved = {j: model.bounds(j) for j in node.fixings}
        for j, (lo, hi) in node.fixings.items():
            model.set_bounds(j, lo, hi)
        try:
            sol = lp_solve(model)
        finally:
            for j, (lo, hi) in saved.items():
                model.set_bounds(j, lo, hi)
        if sol.status == "infeasible":
            return Relaxation("infeasible")
        if sol.status != "optimal":
            raise RuntimeError(f"LP returned status {sol.status}")
        return Relaxation(
            "optimal", bound=sol.objective, lp=sol, integral=sol.is_integral(model)
        )

    def separate(self, node: BnbNode, relax: Relaxation, tree: Tree) -> int:
        state = self.state
        lp: LpSolution = relax.lp
        if relax.integral:
            return cf_separate_integer(state, lp)
        local = [
            q for q in range(len(state.subs)) if _pair_locally_integral(state, lp, q)
        ]
        added = cf_separate_integer(state, lp, local)
        if added:
            return added
        if state.uncapacitated:
            return 0
        if not node.scratch.get("frac_round_done"):
            node.scratch["frac_round_done"] = True
            if state.config.use_fractional_separation:
                added += cf_separate_fractional(state, lp, skip=local)
            if state.config.use_lci:
                added += cf_separate_lci(state, lp)
        return added

    def heuristic(self, node: BnbNode, relax: Relaxation, tree: Tree):
        state = self.state
        if state.uncapacitated or not state.config.use_heuristic:
            return None
        if node.depth > 0:
            if node.scratch.get("heuristic_done") or tree.nodes_explored % 10 != 0:
                return None
            node.scratch["heuristic_done"] = True
        lp: LpSolution = relax.lp
        x_bar = {v: lp.value(j) for v, j in state.x_col.items()}
        z_bar = {key: lp.value(j) for key, j in state.z_col.items()}
        state.stats["heuristic_calls"] += 1
        solution = primal_heuristic_csp(
            state.instance, x_bar, z_bar, state.subs, state.trace
        )
        if solution is None:
            return None
        verdict = verify_solution(state.verify_instance, solution)
        if state.trace is not None:
            state.trace.heuristic_runs[-1]["verified"] = verdict.ok
        if not verdict.ok:
            return None
        state.stats["heuristic_solutions"] += 1
        return Incumbent(solution.objective, solution)

    def accept_incumbent(self, node: BnbNode, relax: Relaxation, tree: Tree):
        state = self.state
        lp: LpSolution = relax.lp
        routes: dict[int, tuple[str, ...]] = {}
        for q, sub in enumerate(state.subs):
            active = {v: round(z) for v, z in state.z_values(lp, q).items()}
            dist, pred = dijkstra_adjacency(
                active_adjacency(sub, active), sub.s, state.counter
            )
            if dist.get(sub.t, INF) > sub.u + sub.tol:
                raise RuntimeError(f"accepted node leaves pair {q} uncovered")
            routes[q] = extract_path(pred, sub.s, sub.t)
        open_stations = frozenset(
            v for v, j in state.x_col.items() if lp.value(j) > 0.5
        )
        objective = sum(state.instance.costs[v] for v in open_stations)
        solution = Solution(
            open_stations=open_stations,
            routes=routes,
            objective=objective,
            loads=station_loads(state.instance, routes),
        )
        verdict = verify_solution(state.verify_instance, solution)
        if not verdict.ok:
            raise RuntimeError(f"integral candidate failed verification: {verdict.first}")
        return Incumbent(objective, solution)

    def branch(self, node: BnbNode, relax: Relaxation, tree: Tree):
        state = self.state
        lp: LpSolution = relax.lp
        x_cands = [(state.x_col[v], lp.value(state.x_col[v])) for v in state.instance.graph.stations]
        z_cands = [
            (col, lp.value(col)) for (_, _), col in sorted(state.z_col.items())
        ] if state.z_col else []
        pick = select_branch_variable(x_cands, z_cands)
        if pick is None:
            raise RuntimeError("fractional relaxation without a branching candidate")
        j, _ = pick
        children = []
        for lo, hi in ((0.0, 0.0), (1.0, 1.0)):
            child = BnbNode(
                node_id=tree.next_id,
                depth=node.depth + 1,
                parent_bound=node.bound,
                fixings={**node.fixings, j: (lo, hi)},
                forbidden=node.forbidden,
                bound=node.bound,
            )
            tree.next_id += 1
            children.append(child)
        return children


def solve_cf(
    instance: Instance,
    config: Optional[SolverConfig] = None,
    trace: Optional[SolveTrace] = None,
) -> SolveResult:
    """Exact solve of the capacitated problem by branch-and-cut."""
    config = config or SolverConfig()
    counter = DijkstraCounter()
    state = build_cf_root(instance, config, counter, trace)
    result = bnb_run(
        _CfCallbacks(state),
        Limits(config.time_limit_s, config.node_limit),
        instance.integral_costs,
    )
    result.dijkstra_calls = counter.count
    result.extra.update(state.stats)
    return result


def solve_cf_uncapacitated(
    instance: Instance,
    separation: str = "ours",
    config: Optional[SolverConfig] = None,
    trace: Optional[SolveTrace] = None,
) -> SolveResult:
    """Solve the uncapacitated relaxation (station variables only).

    ``separation`` picks the integer separation routine: ``ours`` (two
    Dijkstra runs then minimalization) or ``baseline`` (minimalization of the
    trivial inactive-station set). Dijkstra invocations are counted either
    way for comparison runs.
    """
    if separation not in ("ours", "baseline"):
        raise ValueError(f"unknown separation variant {separation!r}")
    config = config or SolverConfig()
    config = SolverConfig(
        time_limit_s=config.time_limit_s,
        node_limit=config.node_limit,
        use_lci=False,
        use_fractional_separation=False,
        use_heuristic=False,
        separation_variant=separation,
    )
    counter = DijkstraCounter()
    state = build_cf_root(instance, config, counter, trace, uncapacitated=True)
    result = bnb_run(
        _CfCallbacks(state),
        Limits(config.time_limit_s, config.node_limit),
        instance.integral_costs,
    )
    result.dijkstra_calls = counter.count
    result.extra.update(state.stats)
    return result
