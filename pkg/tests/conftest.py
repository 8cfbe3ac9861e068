"""Shared fixtures: the six-node example network and instance builders."""

from __future__ import annotations

import math

import pytest

from refuelopt.instances import GeneratorConfig, Instance, generate_instance
from refuelopt.network import (
    STATION,
    TERMINAL,
    GraphArc,
    GraphNode,
    NetworkGraph,
    OdPair,
    RangeParams,
    build_od_subgraph,
)

FIG_ARCS = [
    ("s", "a", 2.0),
    ("s", "b", 2.0),
    ("a", "c", 1.0),
    ("b", "c", 1.0),
    ("a", "d", 1.0),
    ("d", "t", 2.0),
    ("c", "t", 3.0),
    ("b", "t", 3.0),
]


def make_fig_graph() -> NetworkGraph:
    nodes = [GraphNode("s", TERMINAL), GraphNode("t", TERMINAL)] + [
        GraphNode(v, STATION) for v in "abcd"
    ]
    arcs = [GraphArc(u, v, tau, tau) for u, v, tau in FIG_ARCS]
    return NetworkGraph(nodes, arcs)


def make_fig_instance(
    n_pairs: int = 1,
    kappa: float = math.inf,
    u: float = 5.0,
    costs: float = 1.0,
) -> Instance:
    graph = make_fig_graph()
    pairs = tuple(OdPair(q, "s", "t", 1.0, u) for q in range(n_pairs))
    return Instance(
        graph,
        RangeParams(10.0, 5.0, 5.0),
        pairs,
        {v: costs for v in "abcd"},
        {v: kappa for v in "abcd"},
    )


@pytest.fixture
def fig_graph() -> NetworkGraph:
    return make_fig_graph()


@pytest.fixture
def fig_subgraph(fig_graph):
    return build_od_subgraph(fig_graph, OdPair(0, "s", "t", 1.0, 5.0))


@pytest.fixture
def fig_subgraph_loose(fig_graph):
    # budget large enough that the whole graph survives
    return build_od_subgraph(fig_graph, OdPair(0, "s", "t", 1.0, 10.0))


@pytest.fixture
def fig_instance() -> Instance:
    return make_fig_instance()


@pytest.fixture
def fig_instance_two_pairs() -> Instance:
    return make_fig_instance(n_pairs=2, kappa=1.0)


def small_random_instance(seed: int, kappa: float = math.inf) -> Instance:
    """Generator preset used across the randomized tests."""
    cfg = GeneratorConfig(
        seed=seed,
        n_stations=8 + seed % 5,
        n_terminals=4 + seed % 3,
        n_pairs=4 + seed % 5,
        lam=(0.2, 0.35, 0.5)[seed % 3],
        kappa=None if math.isinf(kappa) else kappa,
        r_max=0.7,
    )
    return generate_instance(cfg)
