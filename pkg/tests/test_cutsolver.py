"""Cut-formulation machinery: root LP, separations, heuristic, full solves."""

from __future__ import annotations

import math
from collections import deque

import pytest

from refuelopt.config import SolverConfig, SolveTrace
from refuelopt.cutsolver import (
    build_cf_root,
    cf_separate_integer,
    cf_separate_lci,
    heuristic_resolve_infeasibility,
    primal_heuristic_csp,
    solve_cf,
    solve_cf_uncapacitated,
)
from refuelopt.graphs import enumerate_time_feasible_paths
from refuelopt.instances import Instance, drop_infeasible_pairs
from refuelopt.lp import lp_solve
from refuelopt.network import OdPair, verify_solution

from conftest import make_fig_instance, small_random_instance


class TestRootRelaxation:
    def test_layer_row_present_and_value(self, fig_instance):
        state = build_cf_root(fig_instance)
        layer_rows = [r for r in state.model.rows if r.name.startswith("layer")]
        assert len(layer_rows) == 1
        cols = set(layer_rows[0].coeffs)
        assert cols == {state.z_col[(0, "a")], state.z_col[(0, "b")]}
        sol = lp_solve(state.model)
        assert sol.objective == pytest.approx(1.0)

    def test_loose_capacity_matches_uncapacitated_bound(self):
        capped = build_cf_root(make_fig_instance(n_pairs=2, kappa=10.0))
        free = build_cf_root(make_fig_instance(n_pairs=2), uncapacitated=True)
        assert lp_solve(capped.model).objective == pytest.approx(
            lp_solve(free.model).objective
        )

    def test_strong_links_and_capacity_rows(self):
        inst = make_fig_instance(n_pairs=2, kappa=1.0)
        state = build_cf_root(inst)
        names = [r.name for r in state.model.rows]
        # one capacity row per subgraph station, strong link per (pair, station)
        assert sum(n.startswith("cap") for n in names) == 3  # a, b, d
        assert sum(n.startswith("link") for n in names) == 6


class _FakeLp:
    """Minimal stand-in exposing value() over a dense vector."""

    def __init__(self, values):
        self._v = values

    def value(self, j):
        return self._v[j]


def _lp_with(state, assignments):
    vals = [0.0] * state.model.n_cols
    for key, val in assignments.items():
        vals[key] = val
    return _FakeLp(vals)


class TestIntegerSeparation:
    def test_golden_cut_added(self, fig_instance):
        state = build_cf_root(fig_instance)
        lp = _lp_with(state, {state.z_col[(0, "a")]: 1.0, state.x_col["a"]: 1.0})
        added = cf_separate_integer(state, lp)
        assert added == 1
        row = state.model.rows[-1]
        assert set(row.coeffs) == {state.z_col[(0, "b")], state.z_col[(0, "d")]}
        assert row.sense == ">=" and row.rhs == 1.0

    def test_covered_solution_adds_nothing(self, fig_instance):
        state = build_cf_root(fig_instance)
        lp = _lp_with(
            state,
            {state.z_col[(0, "b")]: 1.0, state.x_col["b"]: 1.0},
        )
        assert cf_separate_integer(state, lp) == 0

    def test_only_requested_pairs_are_separated(self):
        inst = make_fig_instance(n_pairs=2, kappa=math.inf)
        state = build_cf_root(inst)
        lp = _lp_with(
            state,
            {
                state.z_col[(0, "a")]: 1.0,
                state.z_col[(1, "a")]: 1.0,
                state.x_col["a"]: 1.0,
            },
        )
        added = cf_separate_integer(state, lp, pairs=[1])
        rows = [r for r in state.model.rows if r.name.startswith("sep")]
        assert added == 1 and len(rows) == 1
        assert set(rows[0].coeffs) == {state.z_col[(1, "b")], state.z_col[(1, "d")]}

    def test_duplicate_of_layer_row_suppressed(self, fig_instance):
        state = build_cf_root(fig_instance)
        # the all-inactive separator minimalizes to the root layer {a, b}
        lp = _lp_with(state, {})
        assert cf_separate_integer(state, lp) == 0


class TestLciSeparation:
    def _lci_instance(self):
        # one station worth covering, four pairs with the reference demands
        inst = make_fig_instance(n_pairs=4, kappa=10.0, u=5.0)
        demands = (6.0, 5.0, 4.0, 7.0)
        pairs = tuple(
            OdPair(q, "s", "t", demands[q], 5.0) for q in range(4)
        )
        return Instance(inst.graph, inst.ranges, pairs, inst.costs, inst.capacities)

    def test_reference_cover_row(self):
        inst = self._lci_instance()
        state = build_cf_root(inst)
        assignments = {state.x_col["b"]: 1.0}
        zvals = {0: 0.9, 1: 0.9, 2: 0.0, 3: 0.3}
        for q, z in zvals.items():
            assignments[state.z_col[(q, "b")]] = z
        lp = _lp_with(state, assignments)
        added = cf_separate_lci(state, lp)
        assert added >= 1
        row = next(r for r in state.model.rows if r.name == "lci[b]")
        # cover {0, 1}: coefficients 1; outside: alpha(4)=0 drops, alpha(7)=1
        assert row.coeffs == {
            state.z_col[(0, "b")]: 1.0,
            state.z_col[(1, "b")]: 1.0,
            state.z_col[(3, "b")]: 1.0,
        }
        assert row.rhs == 1.0

    def test_unsaturated_station_skipped(self):
        inst = self._lci_instance()
        state = build_cf_root(inst)
        lp = _lp_with(state, {state.x_col["b"]: 1.0, state.z_col[(0, "b")]: 0.2})
        assert cf_separate_lci(state, lp) == 0

    def test_tight_but_not_violated_not_added(self):
        inst = self._lci_instance()
        state = build_cf_root(inst)
        # saturated at x=0.5 (6*0.5 + 5*0.5 = 5.5 >= 10*0.5) and the cover
        # {0,1} gives lhs = 0.5 + 0.5 = rhs exactly: strict violation required
        assignments = {
            state.x_col["b"]: 0.5,
            state.z_col[(0, "b")]: 0.5,
            state.z_col[(1, "b")]: 0.5,
        }
        lp = _lp_with(state, assignments)
        assert cf_separate_lci(state, lp) == 0


class TestPrimalHeuristic:
    def test_follows_lp_guidance(self, fig_instance):
        z_bar = {(0, "b"): 0.9, (0, "a"): 0.1, (0, "c"): 0.1, (0, "d"): 0.1}
        sol = primal_heuristic_csp(fig_instance, {}, z_bar)
        assert sol is not None
        assert sol.routes[0] == ("s", "b", "t")
        assert verify_solution(fig_instance, sol).ok

    def test_capacity_steers_second_pair(self):
        inst = make_fig_instance(n_pairs=2, kappa=1.0)
        z_bar = {(q, v): 0.0 for q in range(2) for v in "abcd"}
        z_bar[(0, "b")] = 0.9
        sol = primal_heuristic_csp(inst, {}, z_bar)
        assert sol is not None
        assert sol.routes[0] == ("s", "b", "t")
        assert sol.routes[1] == ("s", "a", "d", "t")
        assert verify_solution(inst, sol).ok

    def test_eviction_requeues_exactly_once(self):
        # slow down the direct b route so pair 1's budget admits only the
        # two-station route already taken by pair 0: pair 0 gets evicted once
        from refuelopt.network import (
            STATION,
            TERMINAL,
            GraphArc,
            GraphNode,
            NetworkGraph,
            RangeParams,
        )

        nodes = [GraphNode("s", TERMINAL), GraphNode("t", TERMINAL)] + [
            GraphNode(v, STATION) for v in "abd"
        ]
        arcs = [
            GraphArc("s", "a", 2.0, 2.0),
            GraphArc("s", "b", 2.0, 2.0),
            GraphArc("a", "d", 1.0, 1.0),
            GraphArc("d", "t", 2.0, 2.0),
            GraphArc("b", "t", 4.0, 4.0),
        ]
        inst = Instance(
            NetworkGraph(nodes, arcs),
            RangeParams(10.0, 5.0, 5.0),
            (OdPair(0, "s", "t", 1.0, 6.0), OdPair(1, "s", "t", 1.0, 5.0)),
            {v: 1.0 for v in "abd"},
            {v: 1.0 for v in "abd"},
        )
        z_bar = {(q, v): 0.0 for q in range(2) for v in "abd"}
        z_bar[(0, "a")] = 0.9
        z_bar[(0, "d")] = 0.9
        trace = SolveTrace()
        sol = primal_heuristic_csp(inst, {}, z_bar, trace=trace)
        assert sol is not None
        assert sol.routes[1] == ("s", "a", "d", "t")
        assert sol.routes[0] == ("s", "b", "t")
        assert trace.heuristic_runs[-1]["evictions"] == 1
        assert verify_solution(inst, sol).ok

    def test_unservable_pair_returns_none(self):
        inst = make_fig_instance(n_pairs=1, kappa=0.5)  # f=1 exceeds every kappa
        sol = primal_heuristic_csp(inst, {}, {})
        assert sol is None

    def test_resolve_commits_when_room(self, fig_instance):
        loads = {v: 0.0 for v in "abcd"}
        routes: dict[int, tuple[str, ...]] = {}
        fifo = {v: deque() for v in "abcd"}
        ok = heuristic_resolve_infeasibility(
            fig_instance, 0, ("s", "b", "t"), loads, routes, fifo,
            deque(), [0], 5,
        )
        assert ok and routes[0] == ("s", "b", "t") and loads["b"] == 1.0


class TestFullSolves:
    def test_single_pair(self, fig_instance):
        result = solve_cf(fig_instance)
        assert result.status == "optimal"
        assert result.objective == pytest.approx(1.0)
        assert verify_solution(fig_instance, result.solution).ok

    def test_two_pairs_unit_capacity(self):
        inst = make_fig_instance(n_pairs=2, kappa=1.0)
        result = solve_cf(inst)
        assert result.objective == pytest.approx(3.0)
        assert verify_solution(inst, result.solution).ok

    def test_relaxing_capacity_never_hurts(self):
        tight = solve_cf(make_fig_instance(n_pairs=2, kappa=1.0))
        loose = solve_cf(make_fig_instance(n_pairs=2, kappa=2.0))
        assert loose.objective <= tight.objective + 1e-9

    def test_uncapacitated_variants_agree(self):
        inst = small_random_instance(4)
        inst, _ = drop_infeasible_pairs(inst)
        ours = solve_cf_uncapacitated(inst, "ours")
        base = solve_cf_uncapacitated(inst, "baseline")
        assert ours.status == base.status == "optimal"
        assert ours.objective == pytest.approx(base.objective)
        assert ours.dijkstra_calls > 0 and base.dijkstra_calls > 0

    def test_uncapacitated_below_capacitated(self):
        inst = small_random_instance(2, kappa=1.0)
        inst, _ = drop_infeasible_pairs(inst)
        free = solve_cf_uncapacitated(inst, "ours")
        capped = solve_cf(inst)
        if capped.status == "optimal":
            assert free.objective <= capped.objective + 1e-9

    def test_trace_collects_separators(self, fig_instance):
        trace = SolveTrace()
        solve_cf(fig_instance, trace=trace)
        assert trace.separators  # at least the root layer
        for q, stations in trace.separators:
            sub = fig_instance.subgraph(q)
            for path in enumerate_time_feasible_paths(sub):
                assert set(path) & set(stations)
