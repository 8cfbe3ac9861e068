"""Instance model, JSON serialization, synthetic generation and result rows.

The on-disk instance format is JSON::

    {"ranges": {"r_max": ..., "rho_orig": ..., "rho_dest": ...},
     "nodes": [{"id": ..., "role": "terminal"|"station", "cost": ..., "capacity": ...}],
     "arcs": [{"tail": ..., "head": ..., "tau": ..., "ell": ...}],
     "od_pairs": [{"s": ..., "t": ..., "f": ..., "u": ...}]}

Station capacities may be ``null`` for uncapacitated stations. Solutions are
written as ``{"objective", "open", "routes", "utilization"}`` and benchmark
rows as CSV with the fixed header
``formulation,lambda,kappa,time_s,obj,nodes,gap_pct,utilization_pct``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .graphs import INF, dijkstra_adjacency
from .network import (
    STATION,
    TERMINAL,
    GraphNode,
    InvalidGraphError,
    NetworkGraph,
    OdPair,
    OdSubgraph,
    RangeParams,
    Solution,
    apply_refuel_surcharge,
    build_expanded_graph,
    build_od_subgraph,
    station_loads,
)

RESULTS_HEADER = (
    "formulation",
    "lambda",
    "kappa",
    "time_s",
    "obj",
    "nodes",
    "gap_pct",
    "utilization_pct",
)


class InstanceFormatError(ValueError):
    """Parse error with a path to the offending field."""


@dataclass(frozen=True)
class Instance:
    """A full problem instance: graph, ranges, demands, costs and capacities."""

    graph: NetworkGraph
    ranges: RangeParams
    od_pairs: tuple[OdPair, ...]
    costs: dict[str, float]
    capacities: dict[str, float]
    lam: Optional[float] = None
    _subgraphs: dict[int, OdSubgraph] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        for pair in self.od_pairs:
            for end in (pair.s, pair.t):
                if end not in self.graph.roles:
                    raise InvalidGraphError(f"pair {pair.q}: unknown node {end!r}")
                if self.graph.role(end) != TERMINAL:
                    raise InvalidGraphError(
                        f"pair {pair.q}: endpoint {end!r} must be a terminal"
                    )
        for i, pair in enumerate(self.od_pairs):
            if pair.q != i:
                raise InvalidGraphError(
                    f"pair at position {i} carries index {pair.q}; indices must be positional"
                )
        for v in self.graph.stations:
            if v not in self.costs:
                raise InvalidGraphError(f"station {v}: missing cost")
            if v not in self.capacities:
                raise InvalidGraphError(f"station {v}: missing capacity")
            if self.costs[v] < 0:
                raise InvalidGraphError(f"station {v}: negative cost")
            if self.capacities[v] < 0:
                raise InvalidGraphError(f"station {v}: negative capacity")
        for a in self.graph.arcs:
            if self.graph.role(a.tail) == TERMINAL and self.graph.role(a.head) == TERMINAL:
                raise InvalidGraphError(
                    f"arc ({a.tail},{a.head}): terminal-to-terminal arcs are range-infeasible"
                )

    def subgraph(self, q: int) -> OdSubgraph:
        sub = self._subgraphs.get(q)
        if sub is None:
            sub = build_od_subgraph(self.graph, self.od_pairs[q])
            self._subgraphs[q] = sub
        return sub

    def subgraphs(self) -> list[OdSubgraph]:
        return [self.subgraph(q) for q in range(len(self.od_pairs))]

    @property
    def integral_costs(self) -> bool:
        return all(float(c).is_integer() for c in self.costs.values())

    def uniform_capacity(self) -> Optional[float]:
        values = {self.capacities[v] for v in self.graph.stations}
        return values.pop() if len(values) == 1 else None

    def with_uniform_capacity(self, kappa: float) -> "Instance":
        caps = {v: kappa for v in self.graph.stations}
        return Instance(self.graph, self.ranges, self.od_pairs, dict(self.costs), caps, self.lam)

    def with_time_bounds(self, bounds: Mapping[int, float]) -> "Instance":
        pairs = tuple(
            OdPair(p.q, p.s, p.t, p.f, bounds.get(p.q, p.u)) for p in self.od_pairs
        )
        return Instance(self.graph, self.ranges, pairs, dict(self.costs), dict(self.capacities), self.lam)


def drop_infeasible_pairs(instance: Instance) -> tuple[Instance, list[int]]:
    """Remove OD pairs without any time-feasible path.

    Returns the reduced instance (pairs reindexed positionally) together with
    the original indices of the dropped pairs.
    """
    kept: list[OdPair] = []
    removed: list[int] = []
    for pair in instance.od_pairs:
        sub = instance.subgraph(pair.q)
        if sub.empty or sub.tau_from_s.get(pair.t, INF) > pair.u + sub.tol:
            removed.append(pair.q)
        else:
            kept.append(pair)
    pairs = tuple(
        OdPair(i, p.s, p.t, p.f, p.u) for i, p in enumerate(kept)
    )
    reduced = Instance(
        instance.graph,
        instance.ranges,
        pairs,
        dict(instance.costs),
        dict(instance.capacities),
        instance.lam,
    )
    return reduced, removed


def compute_time_bounds(
    instance: Instance,
    lam: float,
    base_times: Optional[Mapping[int, float]] = None,
) -> Instance:
    """Set every time bound to ``(1 + lam)`` times a reference transit time.

    The reference (the conventional-vehicle shortest time) defaults to the
    fastest path in the full graph with no role restrictions; pass
    ``base_times`` to override per pair.
    """
    if lam < 0:
        raise InvalidGraphError("deviation tolerance lambda must be nonnegative")
    adj = instance.graph.adjacency()
    bounds: dict[int, float] = {}
    for pair in instance.od_pairs:
        if base_times is not None and pair.q in base_times:
            base = base_times[pair.q]
        else:
            dist, _ = dijkstra_adjacency(adj, pair.s)
            base = dist.get(pair.t, INF)
        if not base > 0:
            raise InvalidGraphError(f"pair {pair.q}: reference time must be positive")
        bounds[pair.q] = (1.0 + lam) * base
    out = instance.with_time_bounds(bounds)
    return replace(out, lam=lam)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def _require(doc: Mapping, key: str, path: str):
    if key not in doc:
        raise InstanceFormatError(f"{path}.{key}: missing field")
    return doc[key]


def _number(value, path: str, minimum: Optional[float] = None) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise InstanceFormatError(f"{path}: expected a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise InstanceFormatError(f"{path}: value {value} below minimum {minimum}")
    return float(value)


def parse_instance(text: str) -> Instance:
    """Parse and validate an instance document; all invariants are enforced."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"$: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("$: expected an object")
    rng_doc = _require(doc, "ranges", "$")
    ranges = RangeParams(
        r_max=_number(_require(rng_doc, "r_max", "$.ranges"), "$.ranges.r_max", 0),
        rho_orig=_number(_require(rng_doc, "rho_orig", "$.ranges"), "$.ranges.rho_orig"),
        rho_dest=_number(_require(rng_doc, "rho_dest", "$.ranges"), "$.ranges.rho_dest"),
    )
    nodes: list[GraphNode] = []
    costs: dict[str, float] = {}
    capacities: dict[str, float] = {}
    for i, nd in enumerate(_require(doc, "nodes", "$")):
        path = f"$.nodes[{i}]"
        node_id = _require(nd, "id", path)
        if not isinstance(node_id, str):
            raise InstanceFormatError(f"{path}.id: expected a string")
        role = _require(nd, "role", path)
        if role not in (TERMINAL, STATION):
            raise InstanceFormatError(f"{path}.role: expected terminal|station, got {role!r}")
        nodes.append(GraphNode(node_id, role))
        if role == STATION:
            costs[node_id] = _number(_require(nd, "cost", path), f"{path}.cost", 0)
            cap = nd.get("capacity")
            capacities[node_id] = (
                INF if cap is None else _number(cap, f"{path}.capacity", 0)
            )
    known = {n.id for n in nodes}
    arcs = []
    from .network import GraphArc

    for i, ad in enumerate(_require(doc, "arcs", "$")):
        path = f"$.arcs[{i}]"
        tail = _require(ad, "tail", path)
        head = _require(ad, "head", path)
        for end, name in ((tail, "tail"), (head, "head")):
            if end not in known:
                raise InstanceFormatError(f"{path}.{name}: dangling node reference {end!r}")
        arcs.append(
            GraphArc(
                tail,
                head,
                _number(_require(ad, "tau", path), f"{path}.tau", 0),
                _number(_require(ad, "ell", path), f"{path}.ell", 0),
            )
        )
    pairs = []
    roles = {n.id: n.role for n in nodes}
    for i, pd in enumerate(_require(doc, "od_pairs", "$")):
        path = f"$.od_pairs[{i}]"
        s = _require(pd, "s", path)
        t = _require(pd, "t", path)
        for end, name in ((s, "s"), (t, "t")):
            if end not in known:
                raise InstanceFormatError(f"{path}.{name}: dangling node reference {end!r}")
            if roles[end] != TERMINAL:
                raise InstanceFormatError(
                    f"{path}.{name}: origin/destination must be a terminal"
                )
        pairs.append(
            OdPair(
                i,
                s,
                t,
                _number(_require(pd, "f", path), f"{path}.f"),
                _number(_require(pd, "u", path), f"{path}.u"),
            )
        )
    lam = doc.get("lambda")
    try:
        return Instance(
            NetworkGraph(nodes, arcs),
            ranges,
            tuple(pairs),
            costs,
            capacities,
            None if lam is None else _number(lam, "$.lambda", 0),
        )
    except InvalidGraphError as exc:
        raise InstanceFormatError(f"$: {exc}") from exc


def instance_to_json(instance: Instance) -> str:
    nodes = []
    for n in instance.graph.nodes:
        entry: dict = {"id": n.id, "role": n.role}
        if n.role == STATION:
            entry["cost"] = instance.costs[n.id]
            cap = instance.capacities[n.id]
            entry["capacity"] = None if math.isinf(cap) else cap
        nodes.append(entry)
    doc = {
        "ranges": {
            "r_max": instance.ranges.r_max,
            "rho_orig": instance.ranges.rho_orig,
            "rho_dest": instance.ranges.rho_dest,
        },
        "nodes": nodes,
        "arcs": [
            {"tail": a.tail, "head": a.head, "tau": a.tau, "ell": a.ell}
            for a in instance.graph.arcs
        ],
        "od_pairs": [
            {"s": p.s, "t": p.t, "f": p.f, "u": p.u} for p in instance.od_pairs
        ],
    }
    if instance.lam is not None:
        doc["lambda"] = instance.lam
    return json.dumps(doc, indent=1, sort_keys=True)


def load_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_instance(fh.read())


def save_instance(instance: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_json(instance))


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic Euclidean instance generator.

    Locations are sampled uniformly in the bounding box, transit times are
    ``distance / speed`` and each pair's budget allows a ``lam`` deviation
    over its direct (ignoring range) transit time. By default the ranges
    follow the half-capacity rule ``rho_orig = rho_dest = r_max / 2``; all
    stations share one cost and one capacity.
    """

    seed: int
    n_stations: int
    n_terminals: int
    n_pairs: int
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    speed: float = 1.0
    lam: float = 0.3
    kappa: Optional[float] = None
    demand_mix: tuple[float, float, float] = (0.7, 0.2, 0.1)
    r_max: float = 0.6
    refuel_time: float = 0.0
    station_cost: float = 1.0
    demand: float = 1.0

    def __post_init__(self) -> None:
        if self.n_stations <= 0 or self.n_terminals <= 1 or self.n_pairs <= 0:
            raise InvalidGraphError("generator counts must be positive (>=2 terminals)")
        if self.lam < 0:
            raise InvalidGraphError("lambda must be nonnegative")
        if self.speed <= 0 or self.r_max <= 0:
            raise InvalidGraphError("speed and r_max must be positive")
        if any(w < 0 for w in self.demand_mix) or sum(self.demand_mix) <= 0:
            raise InvalidGraphError("demand mix weights must be nonnegative, not all zero")


def generate_instance(config: GeneratorConfig) -> Instance:
    """Deterministically sample a synthetic instance for a fixed seed."""
    rng = random.Random(config.seed)
    x0, y0, x1, y1 = config.bbox
    points: dict[str, tuple[float, float]] = {}
    station_ids = [f"v{i:02d}" for i in range(config.n_stations)]
    terminal_ids = [f"t{i:02d}" for i in range(config.n_terminals)]
    for vid in station_ids + terminal_ids:
        points[vid] = (rng.uniform(x0, x1), rng.uniform(y0, y1))
    nodes = [GraphNode(v, STATION) for v in station_ids] + [
        GraphNode(t, TERMINAL) for t in terminal_ids
    ]
    metrics: dict[tuple[str, str], tuple[float, float]] = {}
    ids = sorted(points)
    for u in ids:
        for v in ids:
            if u == v:
                continue
            ell = math.dist(points[u], points[v])
            metrics[(u, v)] = (ell / config.speed, ell)
    ranges = RangeParams(config.r_max, config.r_max / 2.0, config.r_max / 2.0)
    graph = build_expanded_graph(nodes, metrics, ranges)
    if config.refuel_time > 0:
        graph = apply_refuel_surcharge(graph, config.refuel_time, config.r_max)

    candidates = sorted(
        ((math.dist(points[s], points[t]), s, t)
         for s in terminal_ids for t in terminal_ids if s != t),
    )
    n = len(candidates)
    terciles = [candidates[: n // 3], candidates[n // 3 : 2 * n // 3], candidates[2 * n // 3 :]]
    total_w = sum(config.demand_mix)
    wanted = [int(round(config.n_pairs * w / total_w)) for w in config.demand_mix]
    while sum(wanted) > config.n_pairs:
        wanted[wanted.index(max(wanted))] -= 1
    while sum(wanted) < config.n_pairs:
        wanted[wanted.index(min(wanted))] += 1
    chosen: list[tuple[float, str, str]] = []
    leftovers: list[tuple[float, str, str]] = []
    for bucket, k in zip(terciles, wanted):
        take = min(k, len(bucket))
        picked = rng.sample(bucket, take) if bucket else []
        chosen.extend(picked)
        leftovers.extend(c for c in bucket if c not in picked)
    shortfall = config.n_pairs - len(chosen)
    if shortfall > 0:
        leftovers.sort()
        chosen.extend(rng.sample(leftovers, min(shortfall, len(leftovers))))
    chosen.sort()
    pairs = tuple(
        OdPair(
            i,
            s,
            t,
            config.demand,
            (1.0 + config.lam) * d / config.speed,
        )
        for i, (d, s, t) in enumerate(chosen)
    )
    kappa = INF if config.kappa is None else config.kappa
    return Instance(
        graph,
        ranges,
        pairs,
        {v: config.station_cost for v in station_ids},
        {v: kappa for v in station_ids},
        config.lam,
    )


# ---------------------------------------------------------------------------
# solution and result output
# ---------------------------------------------------------------------------


def mean_utilization_pct(instance: Instance, solution: Solution) -> float:
    """Average load/capacity over open stations, in percent (0 for infinite capacity)."""
    if not solution.open_stations:
        return 0.0
    loads = station_loads(instance, solution.routes)
    total = 0.0
    for v in solution.open_stations:
        cap = instance.capacities[v]
        if math.isinf(cap) or cap <= 0:
            continue
        total += loads.get(v, 0.0) / cap
    return 100.0 * total / len(solution.open_stations)


def solution_to_json(instance: Instance, solution: Solution) -> str:
    loads = station_loads(instance, solution.routes)
    util = {}
    for v in sorted(solution.open_stations):
        cap = instance.capacities[v]
        util[v] = 0.0 if math.isinf(cap) or cap <= 0 else loads.get(v, 0.0) / cap
    doc = {
        "objective": solution.objective,
        "open": sorted(solution.open_stations),
        "routes": {str(q): list(r) for q, r in sorted(solution.routes.items())},
        "utilization": util,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def results_row(
    formulation: str,
    lam,
    kappa,
    result,
    utilization_pct: Optional[float],
) -> dict[str, str]:
    """One benchmark CSV row; infeasible/unsolved cells carry ``---`` markers."""
    kappa_text = "inf" if isinstance(kappa, float) and math.isinf(kappa) else str(kappa)
    row = {
        "formulation": formulation,
        "lambda": "" if lam is None else str(lam),
        "kappa": kappa_text,
        "time_s": f"{result.wall_time_s:.3f}",
        "obj": "---",
        "nodes": str(result.nodes),
        "gap_pct": "---",
        "utilization_pct": "---",
    }
    if result.objective is not None and result.solution is not None:
        row["obj"] = f"{result.objective:g}"
        row["gap_pct"] = f"{100.0 * result.gap:.2f}"
        if utilization_pct is not None:
            row["utilization_pct"] = f"{utilization_pct:.2f}"
    return row


def format_results_csv(rows: Iterable[Mapping[str, str]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULTS_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(dict(row))
    return buf.getvalue()


def append_results_row(path: str, row: Mapping[str, str]) -> None:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            has_header = fh.readline().strip() == ",".join(RESULTS_HEADER)
    except FileNotFoundError:
        has_header = False
    with open(path, "a", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULTS_HEADER, lineterminator="\n")
        if not has_header:
            writer.writeheader()
        writer.writerow(dict(row))
