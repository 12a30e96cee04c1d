import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impgcn.errors import DataError
from impgcn.graph import (build_graph, coverage_profile, coverage_ratio,
                          mean_coverage, mean_coverage_profile)

from oracles import random_bipartite


class TestBuildGraph:
    def test_single_edge_weight_one(self):
        g = build_graph([(0, 0)])
        assert (g.num_users, g.num_items) == (1, 1)
        assert g.user_weights[0] == 1.0

    def test_shared_item_weights(self):
        g = build_graph([(0, 0), (1, 0)])
        assert g.item_degree[0] == 2
        np.testing.assert_allclose(g.user_weights, 1 / math.sqrt(2))

    def test_hand_evaluated_weight(self):
        g = build_graph([(0, 0), (0, 1), (0, 2), (0, 3), (1, 0)])
        # edge (0,0): user degree 4, item degree 2
        assert g.user_indices[0] == 0
        assert g.user_weights[0] == pytest.approx(1 / math.sqrt(8), rel=1e-15)

    def test_duplicates_collapse(self):
        g = build_graph([(0, 0), (0, 0), (1, 0), (0, 0)])
        assert g.num_edges == 2
        assert g.user_degree.tolist() == [1, 1]

    def test_weights_match_degree_formula_to_ulp(self, rng):
        g = build_graph(random_bipartite(rng, 15, 11, 40))
        rows = np.repeat(np.arange(g.num_users), g.user_degree)
        expect = 1.0 / np.sqrt(g.user_degree[rows] * g.item_degree[g.user_indices].astype(float))
        for got, want in zip(g.user_weights, expect):
            assert abs(got - want) <= math.ulp(want)

    def test_deterministic_under_input_order(self, rng):
        pairs = random_bipartite(rng, 10, 8, 30)
        g1 = build_graph(pairs)
        shuffled = [pairs[int(k)] for k in rng.permutation(len(pairs))]
        g2 = build_graph(shuffled)
        for attr in ("user_indptr", "user_indices", "item_indptr", "item_indices",
                     "user_weights", "item_weights"):
            np.testing.assert_array_equal(getattr(g1, attr), getattr(g2, attr))

    def test_both_directions_hold_same_edges(self, rng):
        g = build_graph(random_bipartite(rng, 9, 7, 20))
        from_user = {(u, int(i)) for u in range(g.num_users) for i in g.user_items(u)}
        from_item = {(int(u), i) for i in range(g.num_items) for u in g.item_users(i)}
        assert from_user == from_item
        assert len(from_user) == g.num_edges

    def test_structurally_symmetric_as_block_matrix(self, rng):
        g = build_graph(random_bipartite(rng, 8, 6, 15))
        n = g.num_users
        entries = {}
        for u in range(g.num_users):
            lo, hi = g.user_indptr[u], g.user_indptr[u + 1]
            for i, w in zip(g.user_indices[lo:hi], g.user_weights[lo:hi]):
                entries[(u, n + int(i))] = float(w)
        for i in range(g.num_items):
            lo, hi = g.item_indptr[i], g.item_indptr[i + 1]
            for u, w in zip(g.item_indices[lo:hi], g.item_weights[lo:hi]):
                entries[(n + i, int(u))] = float(w)
        assert all(entries[(a, b)] == entries[(b, a)] for a, b in entries)

    def test_operator_on_ones_matches_direct_sum(self, rng):
        for seed in range(5):
            gen = np.random.default_rng(seed)
            g = build_graph(random_bipartite(gen, 12, 10, 25))
            ones = np.ones((g.num_items, 1))
            got = g.user_operator().matmul(ones)[:, 0]
            want = [sum(1 / math.sqrt(g.user_degree[u] * g.item_degree[i])
                        for i in g.user_items(u)) for u in range(g.num_users)]
            np.testing.assert_allclose(got, want, rtol=1e-14)

    def test_empty_input_rejected(self):
        with pytest.raises(DataError, match="no interactions"):
            build_graph([])

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError, match="out of declared range"):
            build_graph([(0, 0), (3, 0)], num_users=2)

    def test_negative_index_rejected(self):
        with pytest.raises(DataError, match="negative"):
            build_graph([(0, -1)])

    def test_isolated_node_rejected(self):
        # user 1 never appears -> gap in the contiguous range
        with pytest.raises(DataError, match="isolated"):
            build_graph([(0, 0), (2, 0)])
        with pytest.raises(DataError, match="isolated"):
            build_graph([(0, 0)], num_items=2)


class TestCoverage:
    def test_path_examples(self, path_graph):
        # nodes: u0=0, u1=1, i0=2, i1=3
        assert coverage_ratio(path_graph, 0, 1) == 0.5
        assert coverage_ratio(path_graph, 0, 3) == 1.0
        assert coverage_ratio(path_graph, 0, 0) == 1 / 4

    def test_k_zero_is_self_only(self, rng):
        g = build_graph(random_bipartite(rng, 6, 5, 10))
        assert coverage_ratio(g, 3, 0) == 1 / g.num_nodes

    def test_mean_on_path(self, path_graph):
        assert mean_coverage(path_graph, 1) == pytest.approx(0.625)
        profile = mean_coverage_profile(path_graph, 3)
        np.testing.assert_allclose(profile[1:], [0.625, 0.875, 1.0])

    def test_complete_bipartite_diameter_two(self):
        g = build_graph([(u, i) for u in range(2) for i in range(2)])
        assert mean_coverage(g, 2) == 1.0

    def test_matches_networkx_bfs(self, rng):
        g = build_graph(random_bipartite(rng, 10, 8, 20))
        nxg = nx.Graph()
        for u in range(g.num_users):
            for i in g.user_items(u):
                nxg.add_edge(u, g.num_users + int(i))
        for node in range(g.num_nodes):
            lengths = nx.single_source_shortest_path_length(nxg, node)
            for k in range(5):
                want = sum(1 for dist in lengths.values() if dist <= k) / g.num_nodes
                assert coverage_ratio(g, node, k) == pytest.approx(want)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), node=st.integers(0, 16), k=st.integers(0, 6))
    def test_nondecreasing_in_k(self, seed, node, k):
        g = build_graph(random_bipartite(np.random.default_rng(seed), 10, 7, 15))
        profile = coverage_profile(g, node % g.num_nodes, k + 1)
        assert np.all(np.diff(profile) >= 0)

    def test_reaches_one_at_diameter(self, rng):
        g = build_graph(random_bipartite(rng, 10, 8, 25))
        nxg = nx.Graph()
        for u in range(g.num_users):
            for i in g.user_items(u):
                nxg.add_edge(u, g.num_users + int(i))
        if nx.is_connected(nxg):
            diameter = nx.diameter(nxg)
            assert mean_coverage(g, diameter) == 1.0
            assert mean_coverage(g, diameter - 1) < 1.0

    def test_users_only_flag(self, path_graph):
        # user coverages at k=1: u0 -> 0.5, u1 -> 0.75
        assert mean_coverage(path_graph, 1, users_only=True) == pytest.approx(0.625)
        assert mean_coverage(path_graph, 2, users_only=True) == pytest.approx(0.875)

    def test_explicit_node_subset(self, path_graph):
        assert mean_coverage(path_graph, 1, nodes=[0]) == 0.5

    def test_sampling_cap_is_seeded(self, rng):
        g = build_graph(random_bipartite(rng, 20, 15, 40))
        kwargs = dict(sample_cap=10, sample_size=8, seed=5)
        a = mean_coverage_profile(g, 2, **kwargs)
        b = mean_coverage_profile(g, 2, **kwargs)
        np.testing.assert_array_equal(a, b)
        c = mean_coverage_profile(g, 2, sample_cap=10, sample_size=8, seed=6)
        assert not np.array_equal(a, c)

    def test_node_out_of_range(self, path_graph):
        with pytest.raises(DataError, match="out of range"):
            coverage_ratio(path_graph, 99, 1)


class TestBitsetSweep:
    def test_matches_per_node_bfs(self):
        from impgcn.graph import _bitset_band_counts

        for seed in range(4):
            gen = np.random.default_rng(seed)
            g = build_graph(random_bipartite(gen, 40, 30, 120))
            sources = np.arange(g.num_nodes, dtype=np.int64)
            counts = _bitset_band_counts(g, sources, 4)
            for node in range(g.num_nodes):
                per_node = coverage_profile(g, node, 4) * g.num_nodes
                np.testing.assert_array_equal(counts[:, node],
                                              np.rint(per_node).astype(int))

    def test_mean_profile_same_on_both_paths(self):
        from impgcn import graph as graph_mod

        gen = np.random.default_rng(7)
        g = build_graph(random_bipartite(gen, 90, 60, 300))
        fast = mean_coverage_profile(g, 5)  # 150 sources -> bitset path
        slow = sum(coverage_profile(g, node, 5) for node in range(g.num_nodes))
        slow = slow / g.num_nodes
        np.testing.assert_allclose(fast, slow, rtol=1e-12)
        assert g.num_nodes >= graph_mod._BITSET_MIN_SOURCES

    def test_band_boundary(self, monkeypatch):
        from impgcn import graph as graph_mod

        gen = np.random.default_rng(3)
        g = build_graph(random_bipartite(gen, 50, 40, 150))
        monkeypatch.setattr(graph_mod, "_BITSET_BAND", 17)  # force many bands
        banded = mean_coverage_profile(g, 3)
        monkeypatch.undo()
        whole = mean_coverage_profile(g, 3)
        np.testing.assert_allclose(banded, whole, rtol=1e-12)
