"""Branch-cut-and-price on the path formulation.

The restricted master problem selects one time-feasible route per OD pair
(coverage rows at equality) subject to station capacities; station columns
carry the objective. Each pair starts with an auxiliary rejection column
whose big cost strictly dominates any real station set, so every node stays
LP-feasible under branching. Pricing solves one constrained shortest path
per pair on duals (LARAC first, exact verification last), with a Lagrangian
bound enabling early termination when costs are integral. Strong-linking
rows are added lazily by inspection and lifted cover rows via the implied
local usage values. Branching fixes station variables first and then
partitions arcs at the divergence node of the two largest fractional routes.
"""

from __future__ import annotations

import math
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
from .config import PfNodeTrace, SolverConfig, SolveTrace
from .graphs import INF, DijkstraCounter, csp_exact, csp_larac
from .instances import Instance
from .lci import build_lifted_cover
from .lp import INT_TOL, LpModel, LpSolution, lp_solve
from .network import OdSubgraph, Solution, station_loads, verify_solution

PRICING_TOL = 1e-6
VIOLATION_TOL = 1e-6

ArcPair = tuple[str, str]


@dataclass(frozen=True)
class PathColumn:
    """One master column: a route for a pair, or its rejection fallback."""

    q: int
    nodes: tuple[str, ...]
    col: int
    stations: frozenset[str]
    is_rejection: bool = False


@dataclass
class DualValues:
    """Master duals in the signs the pricing expression expects (all >= 0
    except the free coverage duals)."""

    sigma: dict[int, float]
    mu: dict[str, float]
    pi: dict[tuple[str, int], float]
    lam: dict[int, float]  # keyed by LCI row id
    beta: dict[str, float]


@dataclass
class PfState:
    instance: Instance
    subs: list[OdSubgraph]
    model: LpModel
    x_col: dict[str, int]
    coverage_row: dict[int, int]
    capacity_row: dict[str, int]
    rejection: dict[int, PathColumn]
    columns: list[PathColumn]
    column_index: dict[tuple[int, tuple[str, ...]], PathColumn]
    strong_link_row: dict[tuple[str, int], int]
    lci_rows: list[tuple[str, dict[int, int], int]]  # (station, coeffs, row id)
    lci_by_station: dict[str, list[int]]  # station -> indices into lci_rows
    lci_seen: set
    big_m: float
    config: SolverConfig
    counter: DijkstraCounter
    trace: Optional[SolveTrace] = None
    stats: dict = field(default_factory=lambda: {
        "columns_added": 0,
        "pricing_rounds": 0,
        "early_terminations": 0,
        "strong_link_rows": 0,
        "lci_cuts": 0,
    })

    def real_columns(self, q: int) -> list[PathColumn]:
        return [c for c in self.columns if c.q == q and not c.is_rejection]


def build_rmp(
    instance: Instance,
    config: Optional[SolverConfig] = None,
    counter: Optional[DijkstraCounter] = None,
    trace: Optional[SolveTrace] = None,
) -> PfState:
    """Master with coverage and capacity rows plus one rejection column per pair.

    Strong-linking rows are created lazily. The rejection cost is one more
    than the total station cost, so any routing without rejections beats any
    routing with one.
    """
    config = config or SolverConfig()
    counter = counter or DijkstraCounter()
    model = LpModel()
    subs = instance.subgraphs()
    x_col = {
        v: model.add_column(instance.costs[v], 0.0, 1.0, is_integer=True, name=f"x[{v}]")
        for v in instance.graph.stations
    }
    coverage_row = {
        q: model.add_row({}, "=", 1.0, name=f"cover[{q}]")
        for q in range(len(instance.od_pairs))
    }
    capacity_row: dict[str, int] = {}
    for v in instance.graph.stations:
        kappa = instance.capacities[v]
        if math.isinf(kappa):
            continue
        capacity_row[v] = model.add_row(
            {x_col[v]: -kappa}, "<=", 0.0, name=f"cap[{v}]"
        )
    big_m = 1.0 + sum(instance.costs.values())
    state = PfState(
        instance=instance,
        subs=subs,
        model=model,
        x_col=x_col,
        coverage_row=coverage_row,
        capacity_row=capacity_row,
        rejection={},
        columns=[],
        column_index={},
        strong_link_row={},
        lci_rows=[],
        lci_by_station={},
        lci_seen=set(),
        big_m=big_m,
        config=config,
        counter=counter,
        trace=trace,
    )
    for q, pair in enumerate(instance.od_pairs):
        col = model.add_column(
            big_m, 0.0, 1.0, is_integer=True, name=f"reject[{q}]",
            coeffs={coverage_row[q]: 1.0},
        )
        pc = PathColumn(q, (pair.s, pair.t), col, frozenset(), is_rejection=True)
        state.rejection[q] = pc
        state.columns.append(pc)
    return state


def add_path_column(state: PfState, q: int, nodes: tuple[str, ...]) -> PathColumn:
    """Register a priced route as a master column with all its row entries."""
    pair = state.instance.od_pairs[q]
    stations = frozenset(v for v in nodes[1:-1])
    coeffs: dict[int, float] = {state.coverage_row[q]: 1.0}
    for v in stations:
        row = state.capacity_row.get(v)
        if row is not None:
            coeffs[row] = pair.f
        link = state.strong_link_row.get((v, q))
        if link is not None:
            coeffs[link] = 1.0
        for idx in state.lci_by_station.get(v, ()):
            _, lci_coeffs, row_id = state.lci_rows[idx]
            a = lci_coeffs.get(q, 0)
            if a:
                coeffs[row_id] = coeffs.get(row_id, 0.0) + float(a)
    col = state.model.add_column(
        0.0, 0.0, INF, is_integer=True, name=f"y[{q}]", coeffs=coeffs
    )
    pc = PathColumn(q, nodes, col, stations)
    state.columns.append(pc)
    state.column_index[(q, nodes)] = pc
    state.stats["columns_added"] += 1
    if state.trace is not None:
        state.trace.columns.append((q, nodes))
    return pc


def extract_duals(state: PfState, lp: LpSolution) -> DualValues:
    """Raw LP duals mapped onto the master's named multipliers."""
    sigma = {q: lp.dual(row) for q, row in state.coverage_row.items()}
    mu = {v: max(0.0, -lp.dual(row)) for v, row in state.capacity_row.items()}
    pi = {
        key: max(0.0, -lp.dual(row)) for key, row in state.strong_link_row.items()
    }
    lam = {
        row_id: max(0.0, -lp.dual(row_id)) for (_, _, row_id) in state.lci_rows
    }
    beta = {}
    if lp.upper_marginals is not None:
        beta = {
            v: max(0.0, -float(lp.upper_marginals[j]))
            for v, j in state.x_col.items()
        }
    return DualValues(sigma, mu, pi, lam, beta)


def pricing_node_costs(state: PfState, duals: DualValues, q: int) -> dict[str, float]:
    """Per-station pricing cost for one pair (the bracket of the path value)."""
    f = state.instance.od_pairs[q].f
    costs: dict[str, float] = {}
    for v in state.subs[q].stations:
        c = f * duals.mu.get(v, 0.0) + duals.pi.get((v, q), 0.0)
        for idx in state.lci_by_station.get(v, ()):
            _, lci_coeffs, row_id = state.lci_rows[idx]
            a = lci_coeffs.get(q, 0)
            if a:
                c += a * duals.lam.get(row_id, 0.0)
        costs[v] = c
    return costs


def price_columns(
    state: PfState,
    duals: DualValues,
    restrictions: Mapping[int, frozenset[ArcPair]],
    exact: bool,
) -> tuple[list[PathColumn], Optional[dict[int, float]]]:
    """One pricing round over all pairs.

    With ``exact=False`` each pair is priced by LARAC; with ``exact=True`` by
    the label-setting solver, in which case the per-pair optimal reduced
    costs are also returned (they feed the Lagrangian bound). Any discovered
    path with reduced cost below the tolerance joins the master.
    """
    added: list[PathColumn] = []
    best: dict[int, float] = {}
    for q in range(len(state.instance.od_pairs)):
        sub = state.subs[q]
        sigma = duals.sigma.get(q, 0.0)
        if sub.empty:
            best[q] = INF
            continue
        costs = pricing_node_costs(state, duals, q)
        forbid = restrictions.get(q, frozenset())
        if exact:
            path = csp_exact(sub, costs, sub.u, forbid)
        else:
            path = csp_larac(sub, costs, sub.u, forbid, state.counter)
        if path is None:
            best[q] = INF
            continue
        rc = path.cost - sigma
        best[q] = rc
        if rc < -PRICING_TOL and (q, path.nodes) not in state.column_index:
            added.append(add_path_column(state, q, path.nodes))
    return added, (best if exact else None)


def lagrangian_bound(rmp_value: float, best_rc: Mapping[int, float]) -> float:
    """Master lower bound from one exact pricing round."""
    return rmp_value + sum(min(0.0, rc) for rc in best_rc.values())


def _floor(value: float) -> int:
    return math.floor(value + 1e-9)


def pricing_termination(
    rmp_value: float,
    lagrangian: Optional[float],
    global_lb: float,
    parent_lb: float,
    integral_costs: bool,
) -> bool:
    """Early pricing stop when no further column can change the integer part.

    Only applies with integral costs: stop when the master value shares its
    integer part with the global or parent lower bound, or with this round's
    Lagrangian bound.
    """
    if not integral_costs or not math.isfinite(rmp_value):
        return False
    fl = _floor(rmp_value)
    if math.isfinite(global_lb) and _floor(global_lb) == fl:
        return True
    if math.isfinite(parent_lb) and _floor(parent_lb) == fl:
        return True
    if lagrangian is not None and math.isfinite(lagrangian) and _floor(lagrangian) == fl:
        return True
    return False


def pf_separate_strong_linking(state: PfState, lp: LpSolution) -> int:
    """Add violated usage <= open rows found by direct inspection."""
    usage: dict[tuple[str, int], float] = {}
    for colrec in state.columns:
        if colrec.is_rejection:
            continue
        y = lp.value(colrec.col)
        if y <= 1e-12:
            continue
        for v in colrec.stations:
            usage[(v, colrec.q)] = usage.get((v, colrec.q), 0.0) + y
    added = 0
    for (v, q) in sorted(usage):
        if (v, q) in state.strong_link_row:
            continue
        if usage[(v, q)] <= lp.value(state.x_col[v]) + VIOLATION_TOL:
            continue
        coeffs: dict[int, float] = {state.x_col[v]: -1.0}
        for colrec in state.columns:
            if colrec.q == q and not colrec.is_rejection and v in colrec.stations:
                coeffs[colrec.col] = 1.0
        row = state.model.add_row(coeffs, "<=", 0.0, name=f"link[{v},{q}]")
        state.strong_link_row[(v, q)] = row
        state.stats["strong_link_rows"] += 1
        added += 1
    return added


def pf_separate_lci(state: PfState, lp: LpSolution) -> int:
    """Lifted cover rows over the implied local usage values."""
    instance = state.instance
    demands = {q: p.f for q, p in enumerate(instance.od_pairs)}
    usage: dict[str, dict[int, float]] = {}
    for colrec in state.columns:
        if colrec.is_rejection:
            continue
        y = lp.value(colrec.col)
        if y <= 1e-12:
            continue
        for v in colrec.stations:
            usage.setdefault(v, {})[colrec.q] = usage.setdefault(v, {}).get(colrec.q, 0.0) + y
    added = 0
    for v in sorted(state.capacity_row):
        kappa = instance.capacities[v]
        zbar = {
            q: min(1.0, max(0.0, usage.get(v, {}).get(q, 0.0)))
            for q, sub in enumerate(state.subs)
            if v in sub.stations
        }
        if not zbar:
            continue
        used = sum(demands[q] * z for q, z in zbar.items())
        xv = lp.value(state.x_col[v])
        if used < kappa * xv - VIOLATION_TOL or used <= VIOLATION_TOL:
            continue
        cover = build_lifted_cover(v, zbar, demands, kappa)
        if cover is None or (v, cover.cover) in state.lci_seen:
            continue
        lhs = sum(zbar[q] for q in cover.cover) + sum(
            a * zbar[q] for q, a in cover.alpha.items() if a
        )
        if lhs <= cover.rhs + VIOLATION_TOL:
            continue
        full = {q: 1 for q in cover.cover}
        full.update({q: a for q, a in cover.alpha.items()})
        coeffs: dict[int, float] = {}
        for colrec in state.columns:
            if colrec.is_rejection or v not in colrec.stations:
                continue
            a = full.get(colrec.q, 0)
            if a:
                coeffs[colrec.col] = coeffs.get(colrec.col, 0.0) + float(a)
        row = state.model.add_row(coeffs, "<=", float(cover.rhs), name=f"lci[{v}]")
        idx = len(state.lci_rows)
        state.lci_rows.append((v, full, row))
        state.lci_by_station.setdefault(v, []).append(idx)
        state.lci_seen.add((v, cover.cover))
        if state.trace is not None:
            state.trace.lcis.append((v, dict(full), cover.rhs))
        state.stats["lci_cuts"] += 1
        added += 1
    return added


def branch_on_paths(
    state: PfState,
    lp: LpSolution,
    node: BnbNode,
    q: int,
    first: PathColumn,
    second: Optional[PathColumn],
) -> tuple[set[ArcPair], set[ArcPair]]:
    """Partition the out-arcs at the divergence node of two fractional routes.

    Returns (A1, A2) with the first path's arc in A1 and, when a second path
    exists, its arc in A2; remaining allowed arcs are spread as evenly as
    possible. Children forbidding A1 lose the first path and vice versa.
    """
    sub = state.subs[q]
    forbid = node.forbidden.get(q, frozenset())
    p1 = first.nodes
    if second is not None:
        p2 = second.nodes
        div = 0
        limit = min(len(p1), len(p2))
        while div + 1 < limit and p1[div + 1] == p2[div + 1]:
            div += 1
        v = p1[div]
        if p1[div + 1] == p2[div + 1]:
            raise RuntimeError("distinct simple paths with equal endpoints must diverge")
        ref1 = (v, p1[div + 1])
        ref2 = (v, p2[div + 1])
    else:
        v = next(
            (
                u
                for u in p1[:-1]
                if len([w for w, _ in sub.forward_adjacency.get(u, ()) if (u, w) not in forbid]) >= 2
            ),
        )
        i = p1.index(v)
        ref1 = (v, p1[i + 1])
        ref2 = None
    pool = [
        (v, w)
        for w, _ in sub.forward_adjacency.get(v, ())
        if (v, w) not in forbid
    ]
    a1: set[ArcPair] = {ref1}
    a2: set[ArcPair] = {ref2} if ref2 is not None else set()
    for arc in pool:
        if arc in a1 or arc in a2:
            continue
        if len(a2) < len(a1):
            a2.add(arc)
        else:
            a1.add(arc)
    if not a2:
        raise RuntimeError("divergence node offers no alternative arcs")
    return a1, a2


class _PfCallbacks:
    def __init__(self, state: PfState):
        self.state = state

    # -- relaxation -----------------------------------------------------

    def _blocked_columns(self, node: BnbNode) -> list[int]:
        blocked = []
        for colrec in self.state.columns:
            if colrec.is_rejection:
                continue
            forbid = node.forbidden.get(colrec.q)
            if not forbid:
                continue
            arcs = list(zip(colrec.nodes, colrec.nodes[1:]))
            if any(a in forbid for a in arcs):
                blocked.append(colrec.col)
        return blocked

    def solve_relaxation(self, node: BnbNode, tree: Tree) -> Relaxation:
        state = self.state
        model = state.model
        overrides = dict(node.fixings)
        for col in self._blocked_columns(node):
            overrides.setdefault(col, (0.0, 0.0))
        saved = {j: model.bounds(j) for j in overrides}
        for j, (lo, hi) in overrides.items():
            model.set_bounds(j, lo, hi)
        converged = False
        early = False
        lagr_best = node.parent_bound
        last_lagr: Optional[float] = None
        lagr_max: Optional[float] = None
        sol: Optional[LpSolution] = None
        duals: Optional[DualValues] = None
        try:
            while True:
                sol = lp_solve(model)
                if sol.status != "optimal":
                    return Relaxation("infeasible")
                state.stats["pricing_rounds"] += 1
                rmp = sol.objective
                duals = extract_duals(state, sol)
                glb = tree.global_lb(node.parent_bound)
                if state.config.early_termination and pricing_termination(
                    rmp, last_lagr, glb, node.parent_bound, state.instance.integral_costs
                ):
                    early = True
                    state.stats["early_terminations"] += 1
                    break
                if state.config.use_larac:
                    added, _ = price_columns(state, duals, node.forbidden, exact=False)
                    if added:
                        continue
                added, best = price_columns(state, duals, node.forbidden, exact=True)
                lagr = lagrangian_bound(rmp, best)
                last_lagr = lagr
                lagr_max = lagr if lagr_max is None else max(lagr_max, lagr)
                lagr_best = max(lagr_best, lagr)
                if not added:
                    converged = True
                    break
                if state.config.early_termination and pricing_termination(
                    rmp, lagr, glb, node.parent_bound, state.instance.integral_costs
                ):
                    early = True
                    state.stats["early_terminations"] += 1
                    break
        finally:
            for j, (lo, hi) in saved.items():
                model.set_bounds(j, lo, hi)
        bound = sol.objective if converged else max(lagr_best, node.parent_bound)
        if state.trace is not None:
            state.trace.pf_nodes.append(
                PfNodeTrace(
                    node_id=node.node_id,
                    converged=converged,
                    early=early,
                    rmp_value=sol.objective,
                    lagrangian=last_lagr,
                    lagrangian_max=lagr_max,
                    sigma=dict(duals.sigma) if duals else {},
                    node_costs={
                        q: pricing_node_costs(state, duals, q)
                        for q in range(len(state.instance.od_pairs))
                    }
                    if duals
                    else {},
                    forbidden={q: frozenset(s) for q, s in node.forbidden.items()},
                )
            )
        return Relaxation(
            "optimal", bound=bound, lp=sol, integral=sol.is_integral(state.model)
        )

    # -- rows -----------------------------------------------------------

    def separate(self, node: BnbNode, relax: Relaxation, tree: Tree) -> int:
        state = self.state
        if node.depth > 0 and node.scratch.get("sep_rounds", 0) >= 1:
            return 0
        node.scratch["sep_rounds"] = node.scratch.get("sep_rounds", 0) + 1
        lp: LpSolution = relax.lp
        added = pf_separate_strong_linking(state, lp)
        if state.config.use_lci:
            added += pf_separate_lci(state, lp)
        return added

    def heuristic(self, node: BnbNode, relax: Relaxation, tree: Tree):
        return None

    # -- incumbents -----------------------------------------------------

    def accept_incumbent(self, node: BnbNode, relax: Relaxation, tree: Tree):
        state = self.state
        lp: LpSolution = relax.lp
        if any(lp.value(rc.col) > 0.5 for rc in state.rejection.values()):
            # genuine columns could not cover every pair; keep the penalized
            # value for bounding, the solve maps it to infeasibility
            return Incumbent(lp.objective, None)
        routes: dict[int, tuple[str, ...]] = {}
        for q in range(len(state.instance.od_pairs)):
            chosen = [
                c for c in state.real_columns(q) if lp.value(c.col) > 0.5
            ]
            if len(chosen) != 1:
                raise RuntimeError(f"integral PF node without a unique route for pair {q}")
            routes[q] = chosen[0].nodes
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
        verdict = verify_solution(state.instance, solution)
        if not verdict.ok:
            raise RuntimeError(f"integral PF candidate failed verification: {verdict.first}")
        return Incumbent(objective, solution)

    # -- branching ------------------------------------------------------

    def _fractional_pairs(self, lp: LpSolution) -> list[int]:
        out = []
        for q in range(len(self.state.instance.od_pairs)):
            vals = [
                lp.value(c.col)
                for c in self.state.columns
                if c.q == q
            ]
            if any(INT_TOL < v < 1 - INT_TOL for v in vals):
                out.append(q)
        return out

    def branch(self, node: BnbNode, relax: Relaxation, tree: Tree):
        state = self.state
        lp: LpSolution = relax.lp
        x_cands = [
            (state.x_col[v], lp.value(state.x_col[v]))
            for v in state.instance.graph.stations
        ]
        pick = select_branch_variable(x_cands)
        if pick is not None:
            j, _ = pick
            return self._bound_children(node, tree, j)
        split = self._fractional_pairs(lp)
        if not split:
            raise RuntimeError("fractional PF relaxation without a branching candidate")
        split.sort(key=lambda q: (-state.instance.od_pairs[q].f, q))
        for q in split:
            fracs = sorted(
                (
                    c
                    for c in state.real_columns(q)
                    if INT_TOL < lp.value(c.col) < 1 - INT_TOL
                ),
                key=lambda c: (-lp.value(c.col), c.col),
            )
            if len(fracs) >= 2:
                a1, a2 = branch_on_paths(state, lp, node, q, fracs[0], fracs[1])
                return self._arc_children(node, tree, q, a1, a2)
        # single fractional route split against its rejection: shrink the arc
        # universe while any route still has an alternative, then decide the
        # rejection itself once every pair is pinned to a unique path
        for q in split:
            for colrec in sorted(
                state.real_columns(q), key=lambda c: (-lp.value(c.col), c.col)
            ):
                if lp.value(colrec.col) <= INT_TOL:
                    continue
                if self._branchable_node(node, q, colrec) is not None:
                    a1, a2 = branch_on_paths(state, lp, node, q, colrec, None)
                    return self._arc_children(node, tree, q, a1, a2)
        for q in range(len(state.instance.od_pairs)):
            for colrec in sorted(
                state.real_columns(q), key=lambda c: (-lp.value(c.col), c.col)
            ):
                if lp.value(colrec.col) <= INT_TOL:
                    continue
                if self._branchable_node(node, q, colrec) is not None:
                    a1, a2 = branch_on_paths(state, lp, node, q, colrec, None)
                    return self._arc_children(node, tree, q, a1, a2)
        q = split[0]
        return self._bound_children(node, tree, state.rejection[q].col)

    def _branchable_node(self, node: BnbNode, q: int, colrec: PathColumn):
        sub = self.state.subs[q]
        forbid = node.forbidden.get(q, frozenset())
        for u in colrec.nodes[:-1]:
            allowed = [
                w for w, _ in sub.forward_adjacency.get(u, ()) if (u, w) not in forbid
            ]
            if len(allowed) >= 2:
                return u
        return None

    def _bound_children(self, node: BnbNode, tree: Tree, j: int):
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

    def _arc_children(
        self, node: BnbNode, tree: Tree, q: int, a1: set[ArcPair], a2: set[ArcPair]
    ):
        children = []
        for arcs in (a1, a2):
            forbidden = dict(node.forbidden)
            forbidden[q] = node.forbidden.get(q, frozenset()) | frozenset(arcs)
            child = BnbNode(
                node_id=tree.next_id,
                depth=node.depth + 1,
                parent_bound=node.bound,
                fixings=dict(node.fixings),
                forbidden=forbidden,
                bound=node.bound,
            )
            tree.next_id += 1
            children.append(child)
        return children


def solve_pf(
    instance: Instance,
    config: Optional[SolverConfig] = None,
    trace: Optional[SolveTrace] = None,
) -> SolveResult:
    """Exact solve of the capacitated problem by branch-cut-and-price."""
    config = config or SolverConfig()
    counter = DijkstraCounter()
    state = build_rmp(instance, config, counter, trace)
    result = bnb_run(
        _PfCallbacks(state),
        Limits(config.time_limit_s, config.node_limit),
        instance.integral_costs,
    )
    result.dijkstra_calls = counter.count
    result.extra.update(state.stats)
    if result.objective is not None and result.objective >= state.big_m - 0.5:
        # only rejection columns remained feasible
        if result.status == "optimal":
            result.status = "infeasible"
        result.objective = None
        result.solution = None
        result.gap = 0.0 if result.status == "infeasible" else INF
    return result
