import numpy as np
import pytest

from consenslab.errors import InvalidTopologyError
from consenslab.topology import adjacency, build_graph, degrees, is_connected, laplacian

from conftest import random_graph

DEMO_LAPLACIAN = np.array(
    [
        [1, -1, 0, 0, 0, 0],
        [-1, 3, -1, -1, 0, 0],
        [0, -1, 2, -1, 0, 0],
        [0, -1, -1, 4, -1, -1],
        [0, 0, 0, -1, 1, 0],
        [0, 0, 0, -1, 0, 1],
    ],
    dtype=float,
)


class TestBuildGraph:
    def test_demo_graph_degrees(self, demo_graph):
        assert degrees(demo_graph).tolist() == [1, 3, 2, 4, 1, 1]

    def test_demo_graph_laplacian_matches_reference(self, demo_graph):
        np.testing.assert_array_equal(laplacian(demo_graph), DEMO_LAPLACIAN)

    def test_duplicate_and_reversed_edges_collapse(self):
        g = build_graph(3, [(1, 2), (2, 1), (1, 2)])
        assert g.edges == ((0, 1),)

    def test_self_loop_rejected(self):
        with pytest.raises(InvalidTopologyError):
            build_graph(3, [(2, 2)])

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidTopologyError):
            build_graph(3, [(1, 4)])
        with pytest.raises(InvalidTopologyError):
            build_graph(3, [(0, 1)])

    def test_neighbors(self, demo_graph):
        assert demo_graph.neighbors(3) == (1, 2, 4, 5)
        assert demo_graph.neighbors(0) == (1,)


class TestLaplacian:
    def test_edgeless_two_nodes(self):
        np.testing.assert_array_equal(laplacian(build_graph(2, [])), np.zeros((2, 2)))

    def test_single_edge(self):
        np.testing.assert_array_equal(
            laplacian(build_graph(2, [(1, 2)])), [[1, -1], [-1, 1]]
        )

    def test_path_graph(self):
        np.testing.assert_array_equal(
            laplacian(build_graph(3, [(1, 2), (2, 3)])),
            [[1, -1, 0], [-1, 2, -1], [0, -1, 1]],
        )

    def test_random_graph_invariants(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            g = random_graph(rng)
            lap = laplacian(g)
            np.testing.assert_allclose(lap, lap.T)
            np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
            eig = np.linalg.eigvalsh(lap)
            assert eig[0] >= -1e-12


class TestConnectivity:
    def test_demo_graph_connected(self, demo_graph):
        assert is_connected(demo_graph)

    def test_edgeless_disconnected(self):
        assert not is_connected(build_graph(2, []))

    def test_two_disjoint_edges(self):
        assert not is_connected(build_graph(4, [(1, 2), (3, 4)]))

    def test_single_node(self):
        assert is_connected(build_graph(1, []))

    def test_bfs_agrees_with_spectral_gap(self):
        # independent oracle: zero eigenvalue of L is simple iff connected
        rng = np.random.default_rng(5)
        for _ in range(40):
            g = random_graph(rng)
            eig = np.linalg.eigvalsh(laplacian(g))
            assert is_connected(g) == (eig[1] > 1e-9)

    def test_adjacency_symmetric_binary(self, demo_graph):
        a = adjacency(demo_graph)
        np.testing.assert_array_equal(a, a.T)
        assert set(np.unique(a)) <= {0.0, 1.0}
        assert np.all(np.diag(a) == 0)
