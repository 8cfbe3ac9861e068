"""Combinatorial primitives shared by both solvers.

Shortest paths, hop-layer separators, integer/fractional time-separator
routines, separator minimalization and constrained shortest paths (exact
label setting plus the LARAC heuristic). Everything here is pure over
immutable subgraphs; the only mutable object is the per-solve
:class:`DijkstraCounter`.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

import networkx as nx

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .network import OdSubgraph

INF = math.inf

#: dominance comparisons between labels use this absolute slack
DOMINANCE_TOL = 1e-9

ArcPair = tuple[str, str]
Adjacency = Mapping[str, Sequence[tuple[str, float]]]


class SeparatorContractError(ValueError):
    """Raised when a routine receives a set that is not a time-separator."""


@dataclass
class DijkstraCounter:
    """Monotone counter of shortest-path invocations within one solve."""

    count: int = 0

    def bump(self) -> None:
        self.count += 1


@dataclass(frozen=True)
class TimeSeparator:
    """Station set intersecting every time-feasible path of one OD pair."""

    q: int
    stations: frozenset[str]


@dataclass(frozen=True)
class CostedPath:
    """A path with its total transit time and accumulated node cost."""

    nodes: tuple[str, ...]
    time: float
    cost: float


# ---------------------------------------------------------------------------
# shortest-path core
# ---------------------------------------------------------------------------


def dijkstra_adjacency(
    adj: Adjacency,
    source: str,
    counter: Optional[DijkstraCounter] = None,
) -> tuple[dict[str, float], dict[str, str]]:
    """Single-source shortest paths over an adjacency mapping.

    Returns distance labels and predecessor pointers; unreachable nodes are
    simply absent from both maps (treat as +inf).
    """
    if counter is not None:
        counter.bump()
    dist: dict[str, float] = {source: 0.0}
    pred: dict[str, str] = {}
    heap: list[tuple[float, str]] = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, INF) - 1e-15:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def extract_path(pred: Mapping[str, str], source: str, target: str) -> tuple[str, ...]:
    """Walk predecessor pointers back from ``target`` to ``source``."""
    nodes = [target]
    while nodes[-1] != source:
        nodes.append(pred[nodes[-1]])
    nodes.reverse()
    return tuple(nodes)


def dijkstra(
    sub: "OdSubgraph",
    source: str,
    direction: str = "forward",
    counter: Optional[DijkstraCounter] = None,
) -> dict[str, float]:
    """Exact shortest transit times from ``source`` within one OD subgraph.

    ``direction="backward"`` computes times *to* ``source`` by running on the
    reversed adjacency. Unreachable nodes are reported as +inf.
    """
    if direction == "forward":
        adj = sub.forward_adjacency
    elif direction == "backward":
        adj = sub.backward_adjacency
    else:
        raise ValueError(f"unknown direction {direction!r}")
    dist, _ = dijkstra_adjacency(adj, source, counter)
    return {v: dist.get(v, INF) for v in sub.nodes}


def active_adjacency(sub: "OdSubgraph", active: Mapping[str, float]) -> dict[str, list[tuple[str, float]]]:
    """Adjacency of the active subgraph: arcs whose tail is the origin or active."""
    adj: dict[str, list[tuple[str, float]]] = {}
    for u, arcs in sub.forward_adjacency.items():
        if u == sub.s or active.get(u, 0.0) > 0.5:
            adj[u] = list(arcs)
    return adj


def _blocked_adjacency(sub: "OdSubgraph", blocked: frozenset[str] | set[str]) -> dict[str, list[tuple[str, float]]]:
    adj: dict[str, list[tuple[str, float]]] = {}
    for u, arcs in sub.forward_adjacency.items():
        if u in blocked:
            continue
        adj[u] = [(v, w) for v, w in arcs if v not in blocked]
    return adj


def shortest_time_avoiding(
    sub: "OdSubgraph",
    blocked: frozenset[str] | set[str],
    counter: Optional[DijkstraCounter] = None,
) -> float:
    """Fastest s-t transit time in the subgraph with ``blocked`` stations removed."""
    dist, _ = dijkstra_adjacency(_blocked_adjacency(sub, blocked), sub.s, counter)
    return dist.get(sub.t, INF)


def is_time_separator(
    sub: "OdSubgraph",
    stations: Iterable[str],
    counter: Optional[DijkstraCounter] = None,
) -> bool:
    """True iff removing ``stations`` kills every time-feasible s-t path."""
    return shortest_time_avoiding(sub, set(stations), counter) > sub.u + sub.tol


# ---------------------------------------------------------------------------
# separators
# ---------------------------------------------------------------------------


def hop_layer_separators(sub: "OdSubgraph") -> list[TimeSeparator]:
    """Initial coverage rows from BFS hop layers.

    Emits, for every 1 <= k <= hop_dist(s,t)-1, the full layer of stations at
    hop distance k from the origin. Every such layer intersects all s-t paths
    (hop distance increases by at most one per arc), hence is a separator and
    in particular a time-separator. Note the narrower layer variant that also
    constrains the hop distance to the destination is *not* always a
    separator, so full layers are used here.
    """
    hops: dict[str, int] = {sub.s: 0}
    dq = deque([sub.s])
    while dq:
        u = dq.popleft()
        for v, _ in sub.forward_adjacency.get(u, ()):
            if v not in hops:
                hops[v] = hops[u] + 1
                dq.append(v)
    delta = hops.get(sub.t)
    if delta is None or delta <= 1:
        return []
    layers: dict[int, set[str]] = {}
    for v, k in hops.items():
        if v in sub.stations and 1 <= k <= delta - 1:
            layers.setdefault(k, set()).add(v)
    return [
        TimeSeparator(sub.q, frozenset(layers[k]))
        for k in range(1, delta)
        if layers.get(k)
    ]


def integer_time_separator(
    sub: "OdSubgraph",
    active: Mapping[str, float],
    counter: Optional[DijkstraCounter] = None,
    minimalize: bool = True,
) -> Optional[TimeSeparator]:
    """Violated time-separator for a binary station assignment, if any.

    Builds the active subgraph (arcs whose tail is the origin or an active
    station). If that graph already contains a time-feasible s-t path the
    pair is covered and ``None`` is returned after a single Dijkstra run.
    Otherwise the separator consists of the inactive stations that are
    reachable within budget in the active graph and can be extended to a
    time-feasible path in the full subgraph -- one forward run on the active
    graph plus one backward run on the full subgraph.
    """
    fwd, _ = dijkstra_adjacency(active_adjacency(sub, active), sub.s, counter)
    if fwd.get(sub.t, INF) <= sub.u + sub.tol:
        return None
    bwd, _ = dijkstra_adjacency(sub.backward_adjacency, sub.t, counter)
    members = frozenset(
        v
        for v in sub.stations
        if active.get(v, 0.0) <= 0.5
        and fwd.get(v, INF) + bwd.get(v, INF) <= sub.u + sub.tol
    )
    if minimalize and members:
        members = minimalize_separator(sub, members, counter)
    return TimeSeparator(sub.q, members)


def baseline_integer_separator(
    sub: "OdSubgraph",
    active: Mapping[str, float],
    counter: Optional[DijkstraCounter] = None,
) -> Optional[TimeSeparator]:
    """Reference integer separation starting from the trivial separator.

    Checks coverage with one Dijkstra run, then minimalizes the full set of
    inactive stations of the subgraph. Kept as the comparison baseline for
    the two-Dijkstra routine above.
    """
    fwd, _ = dijkstra_adjacency(active_adjacency(sub, active), sub.s, counter)
    if fwd.get(sub.t, INF) <= sub.u + sub.tol:
        return None
    trivial = frozenset(v for v in sub.stations if active.get(v, 0.0) <= 0.5)
    members = minimalize_separator(sub, trivial, counter) if trivial else trivial
    return TimeSeparator(sub.q, members)


def minimalize_separator(
    sub: "OdSubgraph",
    stations: Iterable[str],
    counter: Optional[DijkstraCounter] = None,
) -> frozenset[str]:
    """Shrink a time-separator to a minimal one.

    Members are dropped one at a time in descending station-id order; each
    candidate removal is kept only if the remaining set still blocks every
    time-feasible path (checked with one Dijkstra run per removal).
    """
    current = set(stations)
    if not current:
        return frozenset()
    if not is_time_separator(sub, current, counter):
        raise SeparatorContractError(
            f"input set {sorted(current)} is not a time-separator for pair {sub.q}"
        )
    for v in sorted(current, reverse=True):
        trial = current - {v}
        if is_time_separator(sub, trial, counter):
            current = trial
    return frozenset(current)


def station_mincut(
    sub: "OdSubgraph", weights: Mapping[str, float]
) -> tuple[float, frozenset[str]]:
    """Minimum-weight station cut via the node-splitting max-flow transform.

    Every station v becomes v_in -> v_out with capacity ``weights[v]``;
    original arcs get infinite capacity. The returned set contains exactly
    the stations whose internal arc crosses the source-side minimum cut.
    """
    g = nx.DiGraph()
    source = ("nd", sub.s)
    sink = ("nd", sub.t)
    g.add_node(source)
    g.add_node(sink)
    for v in sorted(sub.stations):
        g.add_edge(("in", v), ("out", v), capacity=max(0.0, weights.get(v, 0.0)))

    def _tail(u: str):
        return ("out", u) if u in sub.stations else ("nd", u)

    def _head(u: str):
        return ("in", u) if u in sub.stations else ("nd", u)

    for arc in sub.arcs:
        g.add_edge(_tail(arc.tail), _head(arc.head))  # no capacity attr = +inf
    if sink not in g or source not in g:
        return 0.0, frozenset()
    value, (reach, _) = nx.minimum_cut(g, source, sink)
    cut = frozenset(
        v for v in sub.stations if ("in", v) in reach and ("out", v) not in reach
    )
    return value, cut


def fractional_separator_mincut(
    sub: "OdSubgraph",
    weights: Mapping[str, float],
    counter: Optional[DijkstraCounter] = None,
) -> tuple[TimeSeparator, float]:
    """Minimum-weight separator for fractional station values.

    Runs max-flow/min-cut on the split graph, minimalizes the resulting
    station set as a time-separator and returns it with its weight. Callers
    add the corresponding coverage row only if the weight is below 1.
    """
    _, cut = station_mincut(sub, weights)
    members = minimalize_separator(sub, cut, counter) if cut else frozenset()
    weight = sum(max(0.0, weights.get(v, 0.0)) for v in members)
    return TimeSeparator(sub.q, members), weight


# ---------------------------------------------------------------------------
# constrained shortest paths
# ---------------------------------------------------------------------------


def _station_cost(sub: "OdSubgraph", node_costs: Mapping[str, float], v: str) -> float:
    return node_costs.get(v, 0.0) if v in sub.stations else 0.0


def csp_exact(
    sub: "OdSubgraph",
    node_costs: Mapping[str, float],
    bound: float,
    forbidden: frozenset[ArcPair] | set[ArcPair] = frozenset(),
) -> Optional[CostedPath]:
    """Minimum-cost path with total transit time at most ``bound``.

    Label-setting dynamic programming over (time, cost) labels with pairwise
    dominance; node costs accrue on the stations a path enters. Stations
    with infinite cost are unusable. Returns ``None`` if no feasible path
    exists. Ties between equal-cost optima are broken by smaller transit
    time, then fewer hops, then lexicographic node sequence.
    """
    labels: list[tuple[float, float, str, int]] = [(0.0, 0.0, sub.s, -1)]
    frontier: dict[str, list[int]] = {sub.s: [0]}
    heap: list[tuple[float, float, int, int]] = [(0.0, 0.0, 0, 0)]
    removed: set[int] = set()
    seq = 1
    to_t = sub.tau_to_t
    while heap:
        t, c, _, idx = heapq.heappop(heap)
        if idx in removed:
            continue
        _, _, u, _ = labels[idx]
        if u == sub.t:
            continue
        for v, tau in sub.forward_adjacency.get(u, ()):
            if (u, v) in forbidden:
                continue
            vc = _station_cost(sub, node_costs, v)
            if vc == INF:
                continue
            nt = t + tau
            if nt > bound + sub.tol:
                continue
            if nt + to_t.get(v, INF) > bound + sub.tol:
                continue
            nc = c + vc
            bucket = frontier.setdefault(v, [])
            dominated = False
            for j in list(bucket):
                jt, jc, _, _ = labels[j]
                if jt <= nt + DOMINANCE_TOL and jc <= nc + DOMINANCE_TOL:
                    dominated = True
                    break
            if dominated:
                continue
            for j in list(bucket):
                jt, jc, _, _ = labels[j]
                if jt >= nt - DOMINANCE_TOL and jc >= nc - DOMINANCE_TOL:
                    bucket.remove(j)
                    removed.add(j)
            labels.append((nt, nc, v, idx))
            bucket.append(len(labels) - 1)
            heapq.heappush(heap, (nt, nc, seq, len(labels) - 1))
            seq += 1
    finals = frontier.get(sub.t, [])
    if not finals:
        return None

    def _reconstruct(j: int) -> tuple[str, ...]:
        rev = []
        while j >= 0:
            rev.append(labels[j][2])
            j = labels[j][3]
        return tuple(reversed(rev))

    best_cost = min(labels[j][1] for j in finals)
    candidates = [
        (labels[j][1], labels[j][0], _reconstruct(j))
        for j in finals
        if labels[j][1] <= best_cost + DOMINANCE_TOL
    ]
    cost, time, nodes = min(candidates, key=lambda e: (e[0], e[1], len(e[2]), e[2]))
    return CostedPath(nodes, time, cost)


def _weighted_dijkstra_path(
    sub: "OdSubgraph",
    node_costs: Mapping[str, float],
    theta: float,
    time_objective: bool,
    forbidden: frozenset[ArcPair] | set[ArcPair],
    counter: Optional[DijkstraCounter],
) -> Optional[CostedPath]:
    adj: dict[str, list[tuple[str, float]]] = {}
    for u, arcs in sub.forward_adjacency.items():
        lst = []
        for v, tau in arcs:
            if (u, v) in forbidden:
                continue
            vc = _station_cost(sub, node_costs, v)
            if vc == INF:
                continue
            lst.append((v, tau if time_objective else vc + theta * tau))
        adj[u] = lst
    dist, pred = dijkstra_adjacency(adj, sub.s, counter)
    if sub.t not in dist:
        return None
    nodes = extract_path(pred, sub.s, sub.t)
    time = sum(
        sub.arc_tau[(nodes[i], nodes[i + 1])] for i in range(len(nodes) - 1)
    )
    cost = sum(_station_cost(sub, node_costs, v) for v in nodes[1:])
    return CostedPath(nodes, time, cost)


def csp_larac(
    sub: "OdSubgraph",
    node_costs: Mapping[str, float],
    bound: float,
    forbidden: frozenset[ArcPair] | set[ArcPair] = frozenset(),
    counter: Optional[DijkstraCounter] = None,
    max_iter: int = 50,
    theta_tol: float = 1e-7,
) -> Optional[CostedPath]:
    """Lagrangian-relaxation heuristic for the constrained shortest path.

    Repeated Dijkstra runs on cost + theta * time with the standard LARAC
    multiplier update; stops once the multiplier interval shrinks below
    ``theta_tol`` or after ``max_iter`` iterations. Any returned path meets
    the time bound; its cost may exceed the exact optimum.
    """
    pc = _weighted_dijkstra_path(sub, node_costs, 0.0, False, forbidden, counter)
    if pc is None:
        return None
    if pc.time <= bound + sub.tol:
        return pc
    pt = _weighted_dijkstra_path(sub, node_costs, 0.0, True, forbidden, counter)
    if pt is None or pt.time > bound + sub.tol:
        return None
    prev_theta = None
    for _ in range(max_iter):
        denom = pt.time - pc.time
        if abs(denom) < 1e-15:
            break
        theta = (pc.cost - pt.cost) / denom
        if not math.isfinite(theta) or theta <= 0.0:
            break
        if prev_theta is not None and abs(theta - prev_theta) < theta_tol:
            break
        prev_theta = theta
        r = _weighted_dijkstra_path(sub, node_costs, theta, False, forbidden, counter)
        if r is None:
            break
        if abs((r.cost + theta * r.time) - (pc.cost + theta * pc.time)) < 1e-12:
            break
        if r.time <= bound + sub.tol:
            pt = r
        else:
            pc = r
    return pt


def enumerate_time_feasible_paths(
    sub: "OdSubgraph",
    forbidden: frozenset[ArcPair] | set[ArcPair] = frozenset(),
    max_paths: Optional[int] = None,
) -> list[tuple[str, ...]]:
    """All simple s-t paths within the time budget, by exhaustive search.

    Intended for desk-scale verification (oracles, separator validity); the
    solvers themselves never enumerate.
    """
    out: list[tuple[str, ...]] = []
    to_t = sub.tau_to_t

    def _dfs(u: str, time: float, trail: list[str], seen: set[str]) -> None:
        if max_paths is not None and len(out) >= max_paths:
            return
        if u == sub.t:
            out.append(tuple(trail))
            return
        for v, tau in sub.forward_adjacency.get(u, ()):
            if v in seen or (u, v) in forbidden:
                continue
            nt = time + tau
            if nt + to_t.get(v, INF) > sub.u + sub.tol:
                continue
            trail.append(v)
            seen.add(v)
            _dfs(v, nt, trail, seen)
            seen.remove(v)
            trail.pop()

    if sub.s in sub.nodes and sub.t in sub.nodes:
        _dfs(sub.s, 0.0, [sub.s], {sub.s})
    return out
