"""Generic best-bound branch-and-bound kernel.

The tree drives node selection, bounding, incumbent bookkeeping and limits;
everything problem-specific (LP relaxation, pricing, separation, branching,
primal heuristics) is supplied through a callback object. Both solvers run
on this kernel, so node processing follows one shared discipline:

1. solve the relaxation (which may internally price columns),
2. separate violated rows and resolve until none are added,
3. prune by bound, accept integral solutions, otherwise branch.

Node selection is best-bound with a deeper-first tiebreak; identical inputs
and limits reproduce identical node sequences.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

from .network import Solution

INF = math.inf

#: variables within this distance of an integer count as integral
INT_TOL = 1e-6

ArcPair = tuple[str, str]

#: per-pair forbidden arc sets accumulated from branching decisions
NodeArcRestrictions = dict[int, frozenset[ArcPair]]


@dataclass
class BnbNode:
    """One search-tree node: cumulative bound changes plus bookkeeping."""

    node_id: int
    depth: int
    parent_bound: float
    fixings: dict[int, tuple[float, float]] = field(default_factory=dict)
    forbidden: NodeArcRestrictions = field(default_factory=dict)
    bound: float = -INF
    scratch: dict = field(default_factory=dict)


@dataclass
class Incumbent:
    value: float
    solution: Optional[Solution]


@dataclass
class Relaxation:
    """Outcome of solving a node's relaxation."""

    status: str  # optimal | infeasible
    bound: float = -INF
    lp: object = None
    integral: bool = False


@dataclass
class Limits:
    time_limit_s: Optional[float] = None
    node_limit: Optional[int] = None


@dataclass
class SolveResult:
    """Summary of one solve: status, bounds, tree size and the solution."""

    status: str  # optimal | infeasible | limit
    objective: Optional[float]
    bound: float
    gap: float
    nodes: int
    wall_time_s: float
    dijkstra_calls: int = 0
    solution: Optional[Solution] = None
    extra: dict = field(default_factory=dict)


class Tree:
    """Shared search state visible to callbacks during a run."""

    def __init__(self, integral_costs: bool):
        self.integral_costs = integral_costs
        self.ub = INF
        self.incumbent: Optional[Incumbent] = None
        self.heap: list[tuple[float, int, int]] = []
        self.nodes_by_id: dict[int, BnbNode] = {}
        self.next_id = 0
        self.nodes_explored = 0
        self.lb_history: list[float] = []
        self.ub_history: list[float] = []

    def effective_bound(self, bound: float) -> float:
        if self.integral_costs and math.isfinite(bound):
            return math.ceil(bound - 1e-6)
        return bound

    def push(self, node: BnbNode) -> None:
        self.nodes_by_id[node.node_id] = node
        heapq.heappush(self.heap, (node.bound, -node.depth, node.node_id))

    def pop(self) -> Optional[BnbNode]:
        while self.heap:
            _, _, node_id = heapq.heappop(self.heap)
            node = self.nodes_by_id.pop(node_id, None)
            if node is not None:
                return node
        return None

    def global_lb(self, current: Optional[float] = None) -> float:
        bounds = [n.bound for n in self.nodes_by_id.values()]
        if current is not None:
            bounds.append(current)
        if not bounds:
            return self.ub
        return min(min(bounds), self.ub)

    def offer_incumbent(self, value: float, solution: Optional[Solution]) -> bool:
        better = value < self.ub - 1e-9
        same_but_real = (
            solution is not None
            and self.incumbent is not None
            and self.incumbent.solution is None
            and value <= self.ub + 1e-9
        )
        if better or same_but_real:
            self.ub = min(self.ub, value)
            self.incumbent = Incumbent(value, solution)
            self.ub_history.append(value)
            return True
        return False


class SearchCallbacks(Protocol):  # pragma: no cover - structural typing only
    def solve_relaxation(self, node: BnbNode, tree: Tree) -> Relaxation: ...

    def separate(self, node: BnbNode, relax: Relaxation, tree: Tree) -> int: ...

    def heuristic(self, node: BnbNode, relax: Relaxation, tree: Tree) -> Optional[Incumbent]: ...

    def accept_incumbent(self, node: BnbNode, relax: Relaxation, tree: Tree) -> Optional[Incumbent]: ...

    def branch(self, node: BnbNode, relax: Relaxation, tree: Tree) -> Sequence[BnbNode]: ...


def select_branch_variable(
    primary: Sequence[tuple[int, float]],
    secondary: Sequence[tuple[int, float]] = (),
    tol: float = INT_TOL,
) -> Optional[tuple[int, float]]:
    """Most-fractional candidate, primary class first.

    Candidates are (column, value) pairs ordered by the caller's tiebreak
    (ascending station id); within a class the one closest to one half wins.
    Returns ``None`` when every candidate is integral.
    """
    for candidates in (primary, secondary):
        fractional = [
            (j, v) for j, v in candidates if abs(v - round(v)) > tol
        ]
        if fractional:
            return min(fractional, key=lambda e: (abs(e[1] - 0.5), e[0]))
    return None


def bnb_run(
    callbacks: SearchCallbacks,
    limits: Limits,
    integral_costs: bool,
) -> SolveResult:
    """Explore the tree best-bound-first until optimality or a limit.

    Lower bounds may be rounded up when all objective coefficients are
    integral. Callbacks must be total: a relaxation is either optimal or
    infeasible, and fractional optima must yield at least one branch.
    """
    started = time.monotonic()
    tree = Tree(integral_costs)
    root = BnbNode(node_id=0, depth=0, parent_bound=-INF)
    tree.next_id = 1
    tree.push(root)

    def out_of_budget() -> bool:
        if limits.time_limit_s is not None and time.monotonic() - started >= limits.time_limit_s:
            return True
        if limits.node_limit is not None and tree.nodes_explored >= limits.node_limit:
            return True
        return False

    while True:
        if out_of_budget():
            break
        node = tree.pop()
        if node is None:
            break
        if tree.effective_bound(node.bound) >= tree.ub - 1e-9:
            continue
        tree.nodes_explored += 1
        tree.lb_history.append(tree.global_lb(node.bound))

        pruned = False
        relax = callbacks.solve_relaxation(node, tree)
        while True:
            if relax.status == "infeasible":
                pruned = True
                break
            node.bound = max(node.bound, relax.bound)
            if tree.effective_bound(node.bound) >= tree.ub - 1e-9:
                pruned = True
                break
            hint = callbacks.heuristic(node, relax, tree)
            if hint is not None:
                tree.offer_incumbent(hint.value, hint.solution)
                if tree.effective_bound(node.bound) >= tree.ub - 1e-9:
                    pruned = True
                    break
            added = callbacks.separate(node, relax, tree)
            if added == 0:
                break
            relax = callbacks.solve_relaxation(node, tree)
        if pruned:
            continue
        if relax.integral:
            inc = callbacks.accept_incumbent(node, relax, tree)
            if inc is not None:
                tree.offer_incumbent(inc.value, inc.solution)
            continue
        for child in callbacks.branch(node, relax, tree):
            if tree.effective_bound(child.bound) < tree.ub - 1e-9:
                tree.push(child)

    wall = time.monotonic() - started
    limit_hit = bool(tree.nodes_by_id)
    if limit_hit:
        status = "limit"
        lb = tree.effective_bound(tree.global_lb())
    elif tree.incumbent is not None:
        status = "optimal"
        lb = tree.ub
    else:
        status = "infeasible"
        lb = INF
    objective = tree.incumbent.value if tree.incumbent else None
    solution = tree.incumbent.solution if tree.incumbent else None
    if status == "optimal":
        gap = 0.0
    elif objective is None or not math.isfinite(objective):
        gap = INF
    else:
        gap = max(0.0, (objective - lb) / max(abs(objective), 1e-12))
    return SolveResult(
        status=status,
        objective=objective,
        bound=lb,
        gap=gap,
        nodes=tree.nodes_explored,
        wall_time_s=wall,
        solution=solution,
        extra={"lb_history": tree.lb_history, "ub_history": tree.ub_history},
    )
