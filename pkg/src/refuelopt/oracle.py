"""Independent brute-force optimum for desk-scale instances.

Enumerates station subsets in nondecreasing cost and decides, for each, the
capacitated integral routing by depth-first assignment over exhaustively
enumerated time-feasible paths with capacity bookkeeping and backtracking.
The first feasible subset cost is the optimum. Deliberately shares no logic
with the LP solvers beyond the subgraph definition.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

from .graphs import enumerate_time_feasible_paths
from .instances import Instance
from .network import Solution, route_time, station_loads


@dataclass(frozen=True)
class OracleResult:
    status: str  # optimal | infeasible | limit
    objective: Optional[float]
    open_stations: frozenset[str]
    routes: dict[int, tuple[str, ...]]

    def solution(self, instance: Instance) -> Optional[Solution]:
        if self.status != "optimal":
            return None
        return Solution(
            open_stations=self.open_stations,
            routes=dict(self.routes),
            objective=self.objective,
            loads=station_loads(instance, self.routes),
        )


def brute_force_oracle(
    instance: Instance,
    max_stations: int = 16,
    time_limit_s: Optional[float] = None,
) -> OracleResult:
    """Optimal objective with certificate, or a proof of infeasibility."""
    stations = list(instance.graph.stations)
    if len(stations) > max_stations:
        raise ValueError(
            f"{len(stations)} stations exceed the oracle guard of {max_stations}"
        )
    n_pairs = len(instance.od_pairs)
    if n_pairs == 0:
        return OracleResult("optimal", 0.0, frozenset(), {})
    started = time.monotonic()
    index = {v: i for i, v in enumerate(stations)}

    # per pair: every time-feasible path as (station bitmask, node tuple)
    pair_paths: list[list[tuple[int, tuple[str, ...]]]] = []
    for q in range(n_pairs):
        sub = instance.subgraph(q)
        paths = []
        for nodes in enumerate_time_feasible_paths(sub):
            mask = 0
            for v in nodes[1:-1]:
                mask |= 1 << index[v]
            paths.append((mask, nodes))
        if not paths:
            return OracleResult("infeasible", None, frozenset(), {})
        paths.sort(key=lambda e: (bin(e[0]).count("1"), e[1]))
        pair_paths.append(paths)

    subsets = sorted(
        range(1 << len(stations)),
        key=lambda m: (
            sum(instance.costs[stations[i]] for i in range(len(stations)) if m >> i & 1),
            bin(m).count("1"),
            m,
        ),
    )
    demands = [p.f for p in instance.od_pairs]
    caps = [instance.capacities[v] for v in stations]

    for mask in subsets:
        if time_limit_s is not None and time.monotonic() - started > time_limit_s:
            return OracleResult("limit", None, frozenset(), {})
        cands = []
        feasible = True
        for q in range(n_pairs):
            usable = [p for p in pair_paths[q] if p[0] & ~mask == 0]
            if not usable:
                feasible = False
                break
            cands.append(usable)
        if not feasible:
            continue
        order = sorted(range(n_pairs), key=lambda q: (len(cands[q]), q))
        loads = [0.0] * len(stations)
        chosen: dict[int, tuple[str, ...]] = {}

        def assign(i: int) -> bool:
            if i == n_pairs:
                return True
            q = order[i]
            f = demands[q]
            for path_mask, nodes in cands[q]:
                bits = path_mask
                ok = True
                while bits:
                    b = (bits & -bits).bit_length() - 1
                    if loads[b] + f > caps[b] + 1e-9:
                        ok = False
                        break
                    bits &= bits - 1
                if not ok:
                    continue
                bits = path_mask
                while bits:
                    b = (bits & -bits).bit_length() - 1
                    loads[b] += f
                    bits &= bits - 1
                chosen[q] = nodes
                if assign(i + 1):
                    return True
                bits = path_mask
                while bits:
                    b = (bits & -bits).bit_length() - 1
                    loads[b] -= f
                    bits &= bits - 1
                del chosen[q]
            return False

        if assign(0):
            open_set = frozenset(
                stations[i] for i in range(len(stations)) if mask >> i & 1
            )
            cost = sum(instance.costs[v] for v in open_set)
            return OracleResult("optimal", cost, open_set, dict(chosen))
    return OracleResult("infeasible", None, frozenset(), {})
