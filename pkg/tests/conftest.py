"""
Pytest configuration and shared fixtures.
"""
from itertools import combinations
from typing import Iterator

import numpy as np
import pytest

from regflow.config.settings import get_settings
from regflow.services.graph import MultiGraph, attach_bipartite_types, attach_metadata, load_edge_list


def set_partitions(n: int) -> Iterator[list[int]]:
    """All set partitions of range(n) as restricted growth strings."""
    if n == 0:
        yield []
        return

    def _extend(prefix: list[int], largest: int) -> Iterator[list[int]]:
        if len(prefix) == n:
            yield list(prefix)
            return
        for module in range(largest + 2):
            prefix.append(module)
            yield from _extend(prefix, max(largest, module))
            prefix.pop()

    yield from _extend([0], 0)


def clique_edges(nodes: range, weight: int = 1) -> list[str]:
    return [f"{u} {v} {weight}" for u, v in combinations(nodes, 2)]


def random_graph(
    seed: int,
    n: int,
    density: float = 0.3,
    directed: bool = True,
    max_weight: int = 5,
) -> MultiGraph:
    """Integer-weighted random graph in which every node has at least one out-link."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    for i in range(n):
        if not mask[i].any():
            mask[i, (i + 1) % n] = True
    if not directed:
        mask = np.triu(mask | mask.T, k=1)
    source, target = np.nonzero(mask)
    weight = rng.integers(1, max_weight + 1, size=source.size)
    return MultiGraph.from_arcs(n, source, target, weight, directed=directed)


def random_bipartite_graph(seed: int, n_a: int, n_b: int, density: float = 0.4) -> MultiGraph:
    """Directed integer-weighted graph with arcs only between the two node types."""
    rng = np.random.default_rng(seed)
    n = n_a + n_b
    types = np.array([0] * n_a + [1] * n_b)
    mask = (rng.random((n, n)) < density) & (types[:, None] != types[None, :])
    for i in range(n):
        if not mask[i].any():
            mask[i, n_a if i < n_a else 0] = True
    source, target = np.nonzero(mask)
    weight = rng.integers(1, 4, size=source.size)
    g = MultiGraph.from_arcs(n, source, target, weight, directed=True)
    return attach_bipartite_types(g, {str(i): "AB"[t] for i, t in enumerate(types)})


def with_random_labels(g: MultiGraph, seed: int, n_labels: int = 3) -> MultiGraph:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_labels, size=g.n_nodes)
    return attach_metadata(g, {name: f"c{label}" for name, label in zip(g.names, labels)})


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch, tmp_path):
    """Isolate settings from the developer's environment and .env.regflow."""
    monkeypatch.chdir(tmp_path)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def two_triangles() -> MultiGraph:
    """Two 3-cliques joined by one unweighted undirected link."""
    return load_edge_list("0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3\n", directed=False)


@pytest.fixture
def two_squares() -> MultiGraph:
    """Two disconnected undirected 4-cliques."""
    lines = clique_edges(range(0, 4)) + clique_edges(range(4, 8))
    return load_edge_list("\n".join(lines), directed=False)


@pytest.fixture
def bridged_cliques() -> MultiGraph:
    """Two undirected 8-cliques of weight 3 joined by a single unit link."""
    lines = clique_edges(range(0, 8), 3) + clique_edges(range(8, 16), 3) + ["7 8 1"]
    return load_edge_list("\n".join(lines), directed=False)


@pytest.fixture
def bridged_cliques_text() -> str:
    lines = clique_edges(range(0, 8), 3) + clique_edges(range(8, 16), 3) + ["7 8 1"]
    return "\n".join(lines) + "\n"
