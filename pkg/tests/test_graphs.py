"""Shortest paths, separators, min-cut separation and constrained shortest paths."""

from __future__ import annotations

import itertools
import math

import pytest

from refuelopt.graphs import (
    DijkstraCounter,
    SeparatorContractError,
    csp_exact,
    csp_larac,
    dijkstra,
    enumerate_time_feasible_paths,
    fractional_separator_mincut,
    hop_layer_separators,
    integer_time_separator,
    baseline_integer_separator,
    minimalize_separator,
    station_mincut,
)
from refuelopt.instances import drop_infeasible_pairs
from refuelopt.network import (
    STATION,
    TERMINAL,
    GraphArc,
    GraphNode,
    NetworkGraph,
    OdPair,
    build_od_subgraph,
)

from conftest import small_random_instance


def chain_graph(n_mid: int = 1, tau: float = 1.0) -> NetworkGraph:
    nodes = [GraphNode("s", TERMINAL), GraphNode("t", TERMINAL)] + [
        GraphNode(f"m{i}", STATION) for i in range(n_mid)
    ]
    seq = ["s"] + [f"m{i}" for i in range(n_mid)] + ["t"]
    arcs = [GraphArc(seq[i], seq[i + 1], tau, tau) for i in range(len(seq) - 1)]
    return NetworkGraph(nodes, arcs)


def _hits_all_paths(sub, stations) -> bool:
    return all(set(p) & set(stations) for p in enumerate_time_feasible_paths(sub))


class TestDijkstra:
    def test_example_distances(self, fig_subgraph):
        labels = dijkstra(fig_subgraph, "s")
        assert labels["d"] == pytest.approx(3.0)
        assert labels["t"] == pytest.approx(5.0)

    def test_source_is_zero(self, fig_subgraph):
        assert dijkstra(fig_subgraph, "s")["s"] == 0.0

    def test_unreachable_is_inf(self, fig_subgraph):
        labels = dijkstra(fig_subgraph, "t")
        assert math.isinf(labels["a"])

    def test_counter_increments(self, fig_subgraph):
        counter = DijkstraCounter()
        dijkstra(fig_subgraph, "s", counter=counter)
        dijkstra(fig_subgraph, "t", direction="backward", counter=counter)
        assert counter.count == 2


class TestHopLayers:
    def test_example_layer(self, fig_subgraph):
        layers = hop_layer_separators(fig_subgraph)
        assert [sorted(l.stations) for l in layers] == [["a", "b"]]
        for layer in layers:
            assert _hits_all_paths(fig_subgraph, layer.stations)

    def test_direct_arc_no_layers(self):
        nodes = [GraphNode("s", TERMINAL), GraphNode("t", TERMINAL)]
        g = NetworkGraph(nodes, [GraphArc("s", "t", 1.0, 1.0)])
        sub = build_od_subgraph(g, OdPair(0, "s", "t", 1.0, 2.0))
        assert hop_layer_separators(sub) == []

    def test_chain_single_station(self):
        g = chain_graph(1)
        sub = build_od_subgraph(g, OdPair(0, "s", "t", 1.0, 5.0))
        layers = hop_layer_separators(sub)
        assert [sorted(l.stations) for l in layers] == [["m0"]]

    def test_narrow_layer_on_example_is_not_a_separator(self, fig_subgraph_loose):
        # stations at forward hop distance k whose backward hop distance also
        # matches do not cut the graph: {b} misses the route via a and d
        assert not _hits_all_paths(fig_subgraph_loose, {"b"})
        assert _hits_all_paths(fig_subgraph_loose, {"a", "b"})


class TestIntegerSeparator:
    def test_golden_example(self, fig_subgraph):
        counter = DijkstraCounter()
        sep = integer_time_separator(fig_subgraph, {"a": 1}, counter)
        assert sorted(sep.stations) == ["b", "d"]

    def test_exactly_two_dijkstras_before_minimalization(self, fig_subgraph):
        counter = DijkstraCounter()
        sep = integer_time_separator(fig_subgraph, {"a": 1}, counter, minimalize=False)
        assert sorted(sep.stations) == ["b", "d"]
        assert counter.count == 2

    def test_loose_budget_keeps_c_out(self, fig_subgraph_loose):
        # with u=10 node c can extend to a time-feasible path, so it joins
        sep = integer_time_separator(fig_subgraph_loose, {"a": 1}, minimalize=False)
        assert sorted(sep.stations) == ["b", "c", "d"]

    def test_all_active_covered(self, fig_subgraph):
        assert integer_time_separator(fig_subgraph, {v: 1 for v in "abcd"}) is None

    def test_chain_none_active(self):
        g = chain_graph(1)
        sub = build_od_subgraph(g, OdPair(0, "s", "t", 1.0, 5.0))
        sep = integer_time_separator(sub, {})
        assert sorted(sep.stations) == ["m0"]

    def test_baseline_agrees_on_separator_validity(self, fig_subgraph):
        ours = integer_time_separator(fig_subgraph, {}, DijkstraCounter())
        base = baseline_integer_separator(fig_subgraph, {}, DijkstraCounter())
        assert _hits_all_paths(fig_subgraph, ours.stations)
        assert _hits_all_paths(fig_subgraph, base.stations)

    def test_baseline_uses_more_dijkstras_on_wide_subgraphs(self):
        inst = small_random_instance(11)
        inst, _ = drop_infeasible_pairs(inst)
        ours_total, base_total = 0, 0
        for q in range(len(inst.od_pairs)):
            sub = inst.subgraph(q)
            c1, c2 = DijkstraCounter(), DijkstraCounter()
            integer_time_separator(sub, {}, c1)
            baseline_integer_separator(sub, {}, c2)
            ours_total += c1.count
            base_total += c2.count
        assert ours_total <= base_total


class TestMinimalize:
    def test_example_input(self, fig_subgraph):
        result = minimalize_separator(fig_subgraph, {"b", "c", "d"})
        assert sorted(result) == ["b", "d"]

    def test_already_minimal_identity(self, fig_subgraph):
        assert sorted(minimalize_separator(fig_subgraph, {"a", "b"})) == ["a", "b"]

    def test_chain_all_stations_to_singleton(self):
        g = chain_graph(3)
        sub = build_od_subgraph(g, OdPair(0, "s", "t", 1.0, 10.0))
        result = minimalize_separator(sub, {"m0", "m1", "m2"})
        assert len(result) == 1

    def test_non_separator_rejected(self, fig_subgraph):
        with pytest.raises(SeparatorContractError):
            minimalize_separator(fig_subgraph, {"d"})

    def test_no_single_removal_survives(self, fig_subgraph_loose):
        result = minimalize_separator(fig_subgraph_loose, {"a", "b", "c", "d"})
        assert _hits_all_paths(fig_subgraph_loose, result)
        for v in result:
            assert not _hits_all_paths(fig_subgraph_loose, result - {v})


def all_simple_paths(sub):
    """Every simple s-t path of the subgraph, time bound ignored."""
    out = []

    def _dfs(u, trail, seen):
        if u == sub.t:
            out.append(tuple(trail))
            return
        for v, _ in sub.forward_adjacency.get(u, ()):
            if v not in seen:
                trail.append(v)
                seen.add(v)
                _dfs(v, trail, seen)
                seen.remove(v)
                trail.pop()

    if sub.s in sub.nodes:
        _dfs(sub.s, [sub.s], {sub.s})
    return out


def brute_min_vertex_cut(sub, weights):
    """Minimum weight over station sets intersecting every s-t path."""
    paths = [set(p) for p in all_simple_paths(sub)]
    best = math.inf
    stations = sorted(sub.stations)
    for r in range(len(stations) + 1):
        for combo in itertools.combinations(stations, r):
            if all(set(combo) & p for p in paths):
                best = min(best, sum(weights.get(v, 0.0) for v in combo))
    return best


class TestFractionalMincut:
    def test_example_violated_cut(self, fig_subgraph_loose):
        sep, weight = fractional_separator_mincut(
            fig_subgraph_loose, {"a": 0.3, "b": 0.4, "c": 0.0, "d": 0.2}
        )
        assert sorted(sep.stations) == ["b", "c", "d"]
        assert weight == pytest.approx(0.6)
        assert weight < 1.0

    def test_example_tight_cut_not_violated(self, fig_subgraph_loose):
        _, weight = fractional_separator_mincut(
            fig_subgraph_loose, {"a": 0.5, "b": 0.5, "c": 0.0, "d": 0.5}
        )
        assert weight == pytest.approx(1.0)

    def test_all_ones_never_violated(self, fig_subgraph_loose):
        _, weight = fractional_separator_mincut(
            fig_subgraph_loose, {v: 1.0 for v in "abcd"}
        )
        assert weight >= 1.0 - 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_mincut_value_matches_enumeration(self, seed):
        import random

        inst = small_random_instance(seed)
        inst, _ = drop_infeasible_pairs(inst)
        rng = random.Random(seed)
        for q in range(min(3, len(inst.od_pairs))):
            sub = inst.subgraph(q)
            if not sub.stations or len(sub.stations) > 9:
                continue
            weights = {v: round(rng.uniform(0.0, 1.0), 3) for v in sub.stations}
            value, cut = station_mincut(sub, weights)
            assert value == pytest.approx(brute_min_vertex_cut(sub, weights), abs=1e-6)
            assert _hits_all_paths(sub, cut) or not cut


class TestCspExact:
    def test_example_costs(self, fig_subgraph):
        path = csp_exact(fig_subgraph, {"a": 0.2, "b": 0.9, "c": 0.1, "d": 0.3}, 5.0)
        assert path.nodes == ("s", "a", "d", "t")
        assert path.cost == pytest.approx(0.5)
        assert path.time == pytest.approx(5.0)

    def test_zero_costs_any_feasible(self, fig_subgraph):
        path = csp_exact(fig_subgraph, {}, 5.0)
        assert path.cost == 0.0
        assert path.time <= 5.0 + 1e-9

    def test_bound_below_fastest_none(self, fig_subgraph):
        assert csp_exact(fig_subgraph, {}, 4.0) is None

    def test_infinite_cost_blocks_station(self, fig_subgraph):
        path = csp_exact(fig_subgraph, {"b": math.inf}, 5.0)
        assert path.nodes == ("s", "a", "d", "t")

    def test_forbidden_arc_respected(self, fig_subgraph):
        path = csp_exact(fig_subgraph, {}, 5.0, forbidden={("s", "b")})
        assert path.nodes == ("s", "a", "d", "t")

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_enumeration(self, seed):
        import random

        inst = small_random_instance(seed)
        inst, _ = drop_infeasible_pairs(inst)
        rng = random.Random(100 + seed)
        for q in range(len(inst.od_pairs)):
            sub = inst.subgraph(q)
            if len(sub.nodes) > 10:
                continue
            costs = {v: round(rng.uniform(0.0, 2.0), 3) for v in sub.stations}
            got = csp_exact(sub, costs, sub.u)
            paths = enumerate_time_feasible_paths(sub)
            want = min(sum(costs[v] for v in p[1:-1]) for p in paths)
            assert got is not None
            assert got.cost == pytest.approx(want, abs=1e-9)


class TestCspLarac:
    def test_cost_shortest_already_feasible(self, fig_subgraph_loose):
        counter = DijkstraCounter()
        path = csp_larac(
            fig_subgraph_loose, {"a": 0.2, "b": 0.9, "c": 0.1, "d": 0.3}, 10.0,
            counter=counter,
        )
        exact = csp_exact(fig_subgraph_loose, {"a": 0.2, "b": 0.9, "c": 0.1, "d": 0.3}, 10.0)
        assert path.cost == pytest.approx(exact.cost)
        assert counter.count == 1  # single relaxed run suffices

    def test_infeasible_bound_none(self, fig_subgraph):
        assert csp_larac(fig_subgraph, {}, 4.0) is None

    @pytest.mark.parametrize("seed", range(8))
    def test_feasible_and_dominated_by_exact(self, seed):
        import random

        inst = small_random_instance(seed)
        inst, _ = drop_infeasible_pairs(inst)
        rng = random.Random(200 + seed)
        for q in range(len(inst.od_pairs)):
            sub = inst.subgraph(q)
            costs = {v: round(rng.uniform(0.0, 2.0), 3) for v in sub.stations}
            heur = csp_larac(sub, costs, sub.u)
            exact = csp_exact(sub, costs, sub.u)
            assert (heur is None) == (exact is None)
            if heur is not None:
                assert heur.time <= sub.u + 1e-9
                assert heur.cost >= exact.cost - 1e-9


class TestSeparatorProperty:
    @pytest.mark.parametrize("seed", range(5))
    def test_emitted_sets_hit_every_path(self, seed):
        import random

        inst = small_random_instance(seed)
        inst, _ = drop_infeasible_pairs(inst)
        rng = random.Random(300 + seed)
        for q in range(len(inst.od_pairs)):
            sub = inst.subgraph(q)
            if len(sub.nodes) > 12:
                continue
            for layer in hop_layer_separators(sub):
                assert _hits_all_paths(sub, layer.stations)
            active = {v: rng.choice([0, 1]) for v in sub.stations}
            sep = integer_time_separator(sub, active)
            if sep is not None and sep.stations:
                assert _hits_all_paths(sub, sep.stations)
