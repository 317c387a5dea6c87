"""Undirected communication graphs and their matrix views.

Node indices are 1-based at the construction boundary (matching scenario
configs) and 0-based everywhere else; :func:`build_graph` converts exactly
once.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTopologyError


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected graph on nodes ``0 .. node_count-1``.

    Edges are stored as a deduplicated tuple of sorted index pairs. Instances
    are immutable and safe to share across concurrent workers.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]

    def neighbors(self, i: int) -> tuple[int, ...]:
        """0-based neighbor indices of node ``i``."""
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return tuple(sorted(out))


def build_graph(node_count: int, edges) -> NetworkGraph:
    """Validate and build a graph from 1-based edge pairs.

    Duplicate pairs and reversed duplicates collapse to a single undirected
    edge. Self-loops and out-of-range indices raise
    :class:`InvalidTopologyError`.
    """
    if node_count < 1:
        raise InvalidTopologyError(f"node_count must be >= 1, got {node_count}")
    dedup = set()
    for pair in edges:
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise InvalidTopologyError(f"self-loop on node {i}")
        if not (1 <= i <= node_count and 1 <= j <= node_count):
            raise InvalidTopologyError(
                f"edge ({i},{j}) out of range for {node_count} nodes"
            )
        dedup.add((min(i, j) - 1, max(i, j) - 1))
    return NetworkGraph(node_count=node_count, edges=tuple(sorted(dedup)))


def adjacency(g: NetworkGraph) -> np.ndarray:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    a = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def degrees(g: NetworkGraph) -> np.ndarray:
    return adjacency(g).sum(axis=1)


def laplacian(g: NetworkGraph) -> np.ndarray:
    """Graph Laplacian D - A: symmetric, zero row sums, PSD."""
    a = adjacency(g)
    return np.diag(a.sum(axis=1)) - a


def is_connected(g: NetworkGraph) -> bool:
    """Single connected component spanning all nodes.

    Breadth-first traversal; exact, no spectral tolerance.
    """
    if g.node_count == 1:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in g.neighbors(v):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == g.node_count
