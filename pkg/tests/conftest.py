import numpy as np
import pytest

from consenslab.topology import NetworkGraph, build_graph


def random_connected_graph(rng: np.random.Generator, max_nodes: int = 50) -> NetworkGraph:
    """Random spanning tree plus extra edges; connected by construction."""
    n = int(rng.integers(2, max_nodes + 1))
    edges = []
    for v in range(2, n + 1):
        u = int(rng.integers(1, v))
        edges.append((u, v))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        i, j = rng.integers(1, n + 1, size=2)
        if i != j:
            edges.append((int(i), int(j)))
    return build_graph(n, edges)


def random_graph(rng: np.random.Generator, max_nodes: int = 20) -> NetworkGraph:
    """Erdos-Renyi-ish graph; may be disconnected."""
    n = int(rng.integers(2, max_nodes + 1))
    edges = [
        (i, j)
        for i in range(1, n + 1)
        for j in range(i + 1, n + 1)
        if rng.random() < 0.15
    ]
    return build_graph(n, edges)


@pytest.fixture
def demo_graph():
    return build_graph(6, [(1, 2), (2, 3), (2, 4), (3, 4), (4, 5), (4, 6)])
