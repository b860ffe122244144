import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import minimum_spanning_tree

from gseg_rm.dataset import PanelDataset
from gseg_rm.graph import (
    GraphError,
    build_kmst,
    decompose,
    format_edge_list,
    kmst_edges,
    kruskal_forest,
    pairwise_distances,
    similarity_graph,
)


def line_distances(xs):
    xs = np.asarray(xs, dtype=float)
    return np.abs(xs[:, None] - xs[None, :])


def tree_weight(dist, edges):
    return float(sum(dist[a, b] for a, b in edges))


class TestDistances:
    def test_identical_rows(self):
        ds = PanelDataset(np.array([[[1.0, 2.0], [1.0, 2.0]], [[0.0, 0.0], [3.0, 4.0]]]))
        dist = pairwise_distances(ds)
        assert dist[0, 1] == 0.0
        assert dist[2, 3] == pytest.approx(np.hypot(3.0, 4.0))

    def test_one_dimensional(self):
        ds = PanelDataset(np.array([[[0.0]], [[3.0]]]))
        assert pairwise_distances(ds)[0, 1] == 3.0

    def test_triangle_inequality(self):
        ds = PanelDataset(np.random.default_rng(5).standard_normal((10, 1, 4)))
        dist = pairwise_distances(ds)
        for i, j, k in itertools.permutations(range(10), 3):
            assert dist[i, k] <= dist[i, j] + dist[j, k] + 1e-12

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            pairwise_distances(PanelDataset(np.zeros((2, 1, 1))), metric="cosine")


class TestKmst:
    def test_collinear_mst(self):
        dist = line_distances([0, 1, 3])
        edges = kmst_edges(dist, k=1)
        assert edges.tolist() == [[0, 1], [1, 2]]
        assert tree_weight(dist, edges) == 3.0

    def test_second_layer_uses_remaining_edge(self):
        edges = kmst_edges(line_distances([0, 1, 3]), k=2)
        assert edges.tolist() == [[0, 1], [0, 2], [1, 2]]

    def test_layers_become_forests_when_edges_run_out(self):
        # three points have only three edges; later layers are empty
        assert len(kmst_edges(line_distances([0, 1, 3]), k=5)) == 3

    @pytest.mark.parametrize("seed", range(5))
    def test_mst_weight_matches_scipy(self, seed):
        pts = np.random.default_rng(seed).standard_normal((30, 3))
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        ours = tree_weight(dist, kmst_edges(dist, k=1))
        assert ours == pytest.approx(minimum_spanning_tree(dist).sum(), rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_second_tree_is_kruskal_on_remaining_edges(self, seed):
        pts = np.random.default_rng(100 + seed).standard_normal((8, 2))
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        first = kruskal_forest(dist)
        second = kruskal_forest(dist, excluded=first)
        assert set(map(tuple, kmst_edges(dist, k=2).tolist())) == set(first) | set(second)
        # brute force: the second tree has minimum weight among spanning trees avoiding the first
        pairs = [p for p in itertools.combinations(range(8), 2) if p not in set(first)]
        best = np.inf
        for cand in itertools.combinations(pairs, 7):
            if _spans(8, cand):
                best = min(best, tree_weight(dist, cand))
        assert tree_weight(dist, second) == pytest.approx(best)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(3, 25),
        st.integers(1, 4),
        st.integers(0, 10_000),
        st.booleans(),
    )
    def test_prim_equals_kruskal(self, N, k, seed, integer_weights):
        rng = np.random.default_rng(seed)
        if integer_weights:
            # heavy ties exercise the (weight, lo, hi) ordering
            w = rng.integers(0, 3, size=(N, N)).astype(float)
        else:
            w = rng.random((N, N))
        dist = np.triu(w, 1) + np.triu(w, 1).T
        np.testing.assert_array_equal(kmst_edges(dist, k, "prim"), kmst_edges(dist, k, "kruskal"))

    def test_edge_count_nine_mst(self):
        ds = PanelDataset(np.random.default_rng(0).standard_normal((20, 3, 5)))
        g = similarity_graph(ds, 9)
        assert g.n_edges == 9 * (60 - 1)

    def test_scale_invariance(self):
        ds = PanelDataset(np.random.default_rng(1).standard_normal((12, 3, 4)))
        a = similarity_graph(ds, 3).edges
        b = similarity_graph(PanelDataset(2.0 * ds.values), 3).edges
        np.testing.assert_array_equal(a, b)

    def test_duplicate_points_are_reproducible(self):
        ds = PanelDataset(np.zeros((4, 2, 3)))
        a = similarity_graph(ds, 2).edges
        np.testing.assert_array_equal(a, similarity_graph(ds, 2).edges)
        np.testing.assert_array_equal(a, similarity_graph(ds, 2, method="kruskal").edges)
        # the first tree is a star on node 0, which leaves node 0 isolated in
        # the second layer: a forest of 6 edges instead of 7
        assert len(a) == 7 + 6

    @pytest.mark.parametrize(
        "dist",
        [np.zeros((2, 3)), np.array([[0, 1], [2, 0]]), np.array([[0, -1], [-1, 0]]), np.array([[0, np.nan], [np.nan, 0]])],
    )
    def test_bad_distance_matrix(self, dist):
        with pytest.raises(GraphError):
            kmst_edges(dist)

    def test_bad_k(self):
        with pytest.raises(GraphError):
            kmst_edges(line_distances([0, 1]), k=0)


def _spans(N, edges):
    parent = list(range(N))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


class TestDecompose:
    def test_within_and_between(self):
        # ell = 3: nodes 0..2 are individual 0, nodes 3..5 individual 1
        g = decompose([[0, 1], [2, 3]], np.repeat(np.arange(2), 3))
        assert g.in_edges.tolist() == [0]
        assert g.out_edges.tolist() == [1]
        assert g.D.tolist() == [[1, 1], [1, 0]]
        assert g.D_row.tolist() == [1, 1]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 3), st.integers(1, 3), st.integers(0, 1000))
    def test_invariants(self, n, ell, k, seed):
        ds = PanelDataset(np.random.default_rng(seed).standard_normal((n, ell, 2)))
        g = similarity_graph(ds, k)
        assert g.D_row.sum() == 2 * g.n_out
        assert np.trace(g.D) == g.n_in
        assert g.n_out + g.n_in == g.n_edges
        np.testing.assert_array_equal(g.D, g.D.T)
        same = g.individual_of[g.edges[:, 0]] == g.individual_of[g.edges[:, 1]]
        np.testing.assert_array_equal(np.flatnonzero(same), g.in_edges)

    @pytest.mark.parametrize(
        "edges, match",
        [([[1, 1]], "self-loop"), ([[0, 1], [1, 0]], "duplicate"), ([[0, 9]], "range")],
    )
    def test_structural_errors(self, edges, match):
        with pytest.raises(GraphError, match=match):
            decompose(edges, [0, 0, 1, 1])

    def test_build_kmst_default_individuals(self):
        g = build_kmst(line_distances([0, 1, 3]), k=1)
        assert g.n == 3 and g.n_in == 0

    def test_edge_list_export(self):
        g = decompose([[0, 1], [1, 2]], [0, 0, 1])
        assert format_edge_list(g) == "0 1 in\n1 2 out\n"
