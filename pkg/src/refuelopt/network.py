"""Expanded refueling network graphs, OD-pair subgraphs and solution checks.

The graph distinguishes terminal sites (trip endpoints) from refueling
stations (the only interior nodes a route may use). Arcs carry a transit
time ``tau`` and a distance ``ell``; graph construction admits exactly the
range-feasible connections for the given vehicle ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .graphs import INF, dijkstra_adjacency

TERMINAL = "terminal"
STATION = "station"

#: absolute tolerance for transit-time comparisons (ties at the bound are feasible)
TIME_TOL = 1e-9


class InvalidGraphError(ValueError):
    """Raised for structurally invalid graphs or instances."""


@dataclass(frozen=True)
class RangeParams:
    """Vehicle range model: maximum range, start fuel and required arrival fuel."""

    r_max: float
    rho_orig: float
    rho_dest: float

    def __post_init__(self) -> None:
        if not (0.0 < self.rho_orig <= self.rho_dest <= self.r_max):
            raise InvalidGraphError(
                "ranges must satisfy 0 < rho_orig <= rho_dest <= r_max, got "
                f"({self.rho_orig}, {self.rho_dest}, {self.r_max})"
            )


@dataclass(frozen=True)
class GraphNode:
    id: str
    role: str

    def __post_init__(self) -> None:
        if self.role not in (TERMINAL, STATION):
            raise InvalidGraphError(f"node {self.id}: unknown role {self.role!r}")


@dataclass(frozen=True)
class GraphArc:
    tail: str
    head: str
    tau: float
    ell: float

    def __post_init__(self) -> None:
        if self.tau < 0 or self.ell < 0:
            raise InvalidGraphError(
                f"arc ({self.tail},{self.head}): negative tau/ell rejected"
            )


class NetworkGraph:
    """Immutable directed expanded network with role-tagged nodes.

    At most one arc per ordered node pair and no self-loops. Construction
    sorts nodes and adjacency deterministically so that all downstream
    algorithms are reproducible.
    """

    def __init__(self, nodes: Iterable[GraphNode], arcs: Iterable[GraphArc]):
        self.nodes: tuple[GraphNode, ...] = tuple(sorted(nodes, key=lambda n: n.id))
        self.roles: dict[str, str] = {}
        for n in self.nodes:
            if n.id in self.roles:
                raise InvalidGraphError(f"duplicate node id {n.id!r}")
            self.roles[n.id] = n.role
        self.stations: tuple[str, ...] = tuple(
            n.id for n in self.nodes if n.role == STATION
        )
        self.terminals: tuple[str, ...] = tuple(
            n.id for n in self.nodes if n.role == TERMINAL
        )
        seen: dict[tuple[str, str], GraphArc] = {}
        for a in arcs:
            if a.tail not in self.roles or a.head not in self.roles:
                raise InvalidGraphError(
                    f"arc ({a.tail},{a.head}) references unknown node"
                )
            if a.tail == a.head:
                raise InvalidGraphError(f"self-loop arc at {a.tail!r}")
            if (a.tail, a.head) in seen:
                raise InvalidGraphError(
                    f"parallel arc ({a.tail},{a.head}); one fastest connection per pair"
                )
            seen[(a.tail, a.head)] = a
        self.arcs: tuple[GraphArc, ...] = tuple(
            seen[k] for k in sorted(seen.keys())
        )
        self._by_pair = {(a.tail, a.head): a for a in self.arcs}
        self.out_arcs: dict[str, tuple[GraphArc, ...]] = {n.id: () for n in self.nodes}
        self.in_arcs: dict[str, tuple[GraphArc, ...]] = {n.id: () for n in self.nodes}
        out_tmp: dict[str, list[GraphArc]] = {n.id: [] for n in self.nodes}
        in_tmp: dict[str, list[GraphArc]] = {n.id: [] for n in self.nodes}
        for a in self.arcs:
            out_tmp[a.tail].append(a)
            in_tmp[a.head].append(a)
        for k in out_tmp:
            self.out_arcs[k] = tuple(out_tmp[k])
            self.in_arcs[k] = tuple(in_tmp[k])

    def role(self, node_id: str) -> str:
        return self.roles[node_id]

    def arc(self, tail: str, head: str) -> Optional[GraphArc]:
        return self._by_pair.get((tail, head))

    def adjacency(self, allowed: Optional[set[str]] = None) -> dict[str, list[tuple[str, float]]]:
        """Forward adjacency as ``{tail: [(head, tau), ...]}``, optionally node-restricted."""
        adj: dict[str, list[tuple[str, float]]] = {}
        for a in self.arcs:
            if allowed is not None and (a.tail not in allowed or a.head not in allowed):
                continue
            adj.setdefault(a.tail, []).append((a.head, a.tau))
        return adj


def range_bound(ranges: RangeParams, tail_role: str, head_role: str) -> float:
    """Maximum admissible distance of a connection per the range table."""
    if tail_role == STATION and head_role == STATION:
        return ranges.r_max
    if tail_role == STATION and head_role == TERMINAL:
        return ranges.r_max - ranges.rho_dest
    if tail_role == TERMINAL and head_role == STATION:
        return ranges.rho_orig
    return ranges.rho_orig - ranges.rho_dest


def build_expanded_graph(
    nodes: Iterable[GraphNode],
    metrics: Mapping[tuple[str, str], tuple[float, float]],
    ranges: RangeParams,
) -> NetworkGraph:
    """Assemble the expanded network from pairwise (tau, ell) measurements.

    An ordered pair (u, v) becomes an arc exactly when its distance does not
    exceed the role-dependent range bound; the comparison is inclusive.
    With rho_orig <= rho_dest this never admits terminal-to-terminal arcs of
    positive length, so every trip refuels at least once.
    """
    node_list = tuple(nodes)
    roles = {n.id: n.role for n in node_list}
    arcs = []
    for (u, v), (tau, ell) in metrics.items():
        if u == v:
            continue
        if u not in roles or v not in roles:
            raise InvalidGraphError(f"metrics reference unknown node ({u},{v})")
        if tau < 0 or ell < 0:
            raise InvalidGraphError(f"pair ({u},{v}): negative tau/ell rejected")
        if ell <= range_bound(ranges, roles[u], roles[v]):
            arcs.append(GraphArc(u, v, tau, ell))
    return NetworkGraph(node_list, arcs)


def apply_refuel_surcharge(
    graph: NetworkGraph, full_refuel_time: float, r_max: float
) -> NetworkGraph:
    """Add distance-proportional refueling time to every arc entering a station.

    Each such arc gains ``full_refuel_time * ell / r_max``; arcs into
    terminals are untouched. Never decreases any transit time.
    """
    if r_max <= 0:
        raise InvalidGraphError("r_max must be positive for the refuel surcharge")
    if full_refuel_time < 0:
        raise InvalidGraphError("full_refuel_time must be nonnegative")
    if full_refuel_time == 0:
        return graph
    arcs = [
        GraphArc(a.tail, a.head, a.tau + full_refuel_time * a.ell / r_max, a.ell)
        if graph.role(a.head) == STATION
        else a
        for a in graph.arcs
    ]
    return NetworkGraph(graph.nodes, arcs)


def quasimetric_violations(
    graph: NetworkGraph, max_triples: int = 20000
) -> list[tuple[str, str, str]]:
    """Sampled triangle-inequality check: direct arc vs two-arc detour.

    Diagnostic only -- the refuel surcharge deliberately inflates times into
    stations and can break the inequality, so this is not enforced at parse
    time.
    """
    bad: list[tuple[str, str, str]] = []
    count = 0
    for a in graph.arcs:
        for mid in graph.out_arcs[a.tail]:
            if count >= max_triples:
                return bad
            w = mid.head
            if w == a.head:
                continue
            second = graph.arc(w, a.head)
            if second is None:
                continue
            count += 1
            if a.tau > mid.tau + second.tau + 1e-9:
                bad.append((a.tail, w, a.head))
    return bad


@dataclass(frozen=True)
class OdPair:
    """One origin-destination demand with its flow and transit-time budget."""

    q: int
    s: str
    t: str
    f: float
    u: float

    def __post_init__(self) -> None:
        if self.s == self.t:
            raise InvalidGraphError(f"pair {self.q}: origin equals destination")
        if not self.f > 0:
            raise InvalidGraphError(f"pair {self.q}: demand must be positive")
        if not self.u > 0:
            raise InvalidGraphError(f"pair {self.q}: time bound must be positive")


@dataclass(frozen=True)
class OdSubgraph:
    """Per-pair restriction of the network to its time-feasible area.

    Interior nodes are stations only; terminals other than the pair's own
    endpoints never appear (separators are station sets, and routes may not
    pass through third-party terminals). Shortest-time labels from the
    origin and to the destination are cached for reuse by the separation and
    pricing routines.
    """

    pair: OdPair
    nodes: frozenset[str]
    stations: frozenset[str]
    arcs: tuple[GraphArc, ...]
    forward_adjacency: dict[str, tuple[tuple[str, float], ...]]
    backward_adjacency: dict[str, tuple[tuple[str, float], ...]]
    tau_from_s: dict[str, float]
    tau_to_t: dict[str, float]
    arc_tau: dict[tuple[str, str], float]
    tol: float = TIME_TOL

    @property
    def q(self) -> int:
        return self.pair.q

    @property
    def s(self) -> str:
        return self.pair.s

    @property
    def t(self) -> str:
        return self.pair.t

    @property
    def u(self) -> float:
        return self.pair.u

    @property
    def empty(self) -> bool:
        return self.t not in self.nodes or self.s not in self.nodes

    def has_arc(self, tail: str, head: str) -> bool:
        return (tail, head) in self.arc_tau


def build_od_subgraph(
    graph: NetworkGraph, pair: OdPair, tol: float = TIME_TOL
) -> OdSubgraph:
    """Restrict the network to the nodes and arcs usable by one OD pair.

    A node survives iff fastest-in plus fastest-out fits the budget; an arc
    survives iff some budget-feasible s-t walk crosses it. Arcs into the
    origin or out of the destination are dropped -- no simple s-t path can
    use them. Shortest times are computed over stations plus the pair's own
    terminals.
    """
    if graph.role(pair.s) != TERMINAL or graph.role(pair.t) != TERMINAL:
        raise InvalidGraphError(f"pair {pair.q}: endpoints must be terminals")
    universe = set(graph.stations) | {pair.s, pair.t}
    fwd_adj = graph.adjacency(universe)
    bwd_adj: dict[str, list[tuple[str, float]]] = {}
    for u, lst in fwd_adj.items():
        for v, w in lst:
            bwd_adj.setdefault(v, []).append((u, w))
    fs, _ = dijkstra_adjacency(fwd_adj, pair.s)
    ft, _ = dijkstra_adjacency(bwd_adj, pair.t)
    budget = pair.u + tol
    nodes = frozenset(
        v
        for v in universe
        if fs.get(v, INF) + ft.get(v, INF) <= budget
    )
    arcs = tuple(
        a
        for a in graph.arcs
        if a.tail in universe
        and a.head in universe
        and a.head != pair.s
        and a.tail != pair.t
        and fs.get(a.tail, INF) + a.tau + ft.get(a.head, INF) <= budget
    )
    fadj: dict[str, list[tuple[str, float]]] = {v: [] for v in nodes}
    badj: dict[str, list[tuple[str, float]]] = {v: [] for v in nodes}
    for a in arcs:
        fadj[a.tail].append((a.head, a.tau))
        badj[a.head].append((a.tail, a.tau))
    return OdSubgraph(
        pair=pair,
        nodes=nodes,
        stations=frozenset(v for v in nodes if graph.role(v) == STATION),
        arcs=arcs,
        forward_adjacency={v: tuple(sorted(fadj[v])) for v in nodes},
        backward_adjacency={v: tuple(sorted(badj[v])) for v in nodes},
        tau_from_s={v: fs.get(v, INF) for v in nodes},
        tau_to_t={v: ft.get(v, INF) for v in nodes},
        arc_tau={(a.tail, a.head): a.tau for a in arcs},
        tol=tol,
    )


@dataclass(frozen=True)
class Solution:
    """Open stations plus one route per OD pair."""

    open_stations: frozenset[str]
    routes: dict[int, tuple[str, ...]]
    objective: float
    loads: dict[str, float]
    gap: float = 0.0


@dataclass(frozen=True)
class Verdict:
    ok: bool
    violations: tuple[str, ...]

    @property
    def first(self) -> Optional[str]:
        return self.violations[0] if self.violations else None


def route_time(graph: NetworkGraph, route: Sequence[str]) -> float:
    """Transit time of a route, summed directly from graph arcs."""
    total = 0.0
    for i in range(len(route) - 1):
        arc = graph.arc(route[i], route[i + 1])
        if arc is None:
            return INF
        total += arc.tau
    return total


def station_loads(instance, solution_routes: Mapping[int, Sequence[str]]) -> dict[str, float]:
    """Flow through each station, accumulated from scratch over all routes."""
    loads: dict[str, float] = {v: 0.0 for v in instance.graph.stations}
    for q, route in solution_routes.items():
        f = instance.od_pairs[q].f
        for v in route[1:-1]:
            if v in loads:
                loads[v] += f
    return loads


def verify_solution(instance, solution: Solution, tol: float = TIME_TOL) -> Verdict:
    """Independent feasibility check of a solution against an instance.

    Per route: endpoints, no repeated nodes, transit time within the bound,
    arc membership in the pair's subgraph, interior stations open. Per
    station: accumulated flow within capacity. Violations are reported as
    data, most fundamental first; the objective is cross-checked against the
    open set.
    """
    violations: list[str] = []
    graph = instance.graph
    for pair in instance.od_pairs:
        route = solution.routes.get(pair.q)
        if route is None:
            violations.append(f"pair {pair.q}: missing route")
            continue
        if not route or route[0] != pair.s or route[-1] != pair.t:
            violations.append(f"pair {pair.q}: route endpoints differ from ({pair.s},{pair.t})")
            continue
        if len(set(route)) != len(route):
            violations.append(f"pair {pair.q}: route repeats a node")
            continue
        missing = [
            (route[i], route[i + 1])
            for i in range(len(route) - 1)
            if graph.arc(route[i], route[i + 1]) is None
        ]
        if missing:
            violations.append(f"pair {pair.q}: arc {missing[0]} not in the graph")
            continue
        t = route_time(graph, route)
        if t > pair.u + tol:
            violations.append(
                f"pair {pair.q}: transit time {t:.6g} exceeds bound {pair.u:.6g}"
            )
            continue
        sub = instance.subgraph(pair.q)
        bad_arc = next(
            (
                (route[i], route[i + 1])
                for i in range(len(route) - 1)
                if not sub.has_arc(route[i], route[i + 1])
            ),
            None,
        )
        if bad_arc is not None:
            violations.append(f"pair {pair.q}: arc {bad_arc} not in the pair subgraph")
            continue
        for v in route[1:-1]:
            if graph.role(v) != STATION:
                violations.append(f"pair {pair.q}: interior node {v} is not a station")
                break
            if v not in solution.open_stations:
                violations.append(f"pair {pair.q}: interior station {v} is not open")
                break
    loads = station_loads(instance, solution.routes)
    for v in sorted(loads):
        cap = instance.capacities[v]
        if loads[v] > cap + 1e-9:
            violations.append(
                f"station {v}: load {loads[v]:.6g} exceeds capacity {cap:.6g}"
            )
    expected_obj = sum(instance.costs[v] for v in solution.open_stations)
    if not math.isclose(solution.objective, expected_obj, rel_tol=0, abs_tol=1e-6):
        violations.append(
            f"objective {solution.objective:.6g} differs from open-set cost {expected_obj:.6g}"
        )
    return Verdict(ok=not violations, violations=tuple(violations))
