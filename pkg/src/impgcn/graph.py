"""Immutable bipartite interaction graph with its normalized adjacency.

Node numbering convention for whole-graph operations (coverage, diagnostics):
users occupy ids ``0 .. num_users-1`` and items ``num_users .. num_users +
num_items - 1``.

Edge weights are the symmetric normalization ``1 / sqrt(|N_u| * |N_i|)``
computed from full-graph degrees and stored in float64; propagation casts
them to the working precision on demand.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .sparse import CsrMatrix, csr_from_sorted_coo


@dataclass(frozen=True)
class InteractionGraph:
    num_users: int
    num_items: int
    # user -> item direction, item indices sorted within each user row
    user_indptr: np.ndarray
    user_indices: np.ndarray
    # item -> user direction, user indices sorted within each item row
    item_indptr: np.ndarray
    item_indices: np.ndarray
    user_degree: np.ndarray
    item_degree: np.ndarray
    # per-edge 1/sqrt(|N_u|*|N_i|), aligned with each CSR direction
    user_weights: np.ndarray
    item_weights: np.ndarray
    _op_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_edges(self) -> int:
        return int(self.user_indices.shape[0])

    def user_items(self, u: int) -> np.ndarray:
        """Sorted item neighbors of user ``u``."""
        return self.user_indices[self.user_indptr[u]:self.user_indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        """Sorted user neighbors of item ``i``."""
        return self.item_indices[self.item_indptr[i]:self.item_indptr[i + 1]]

    def user_operator(self, dtype=np.float64) -> CsrMatrix:
        """Normalized adjacency block mapping item vectors to user vectors."""
        key = ("user", np.dtype(dtype))
        if key not in self._op_cache:
            self._op_cache[key] = CsrMatrix(
                self.user_indptr, self.user_indices,
                self.user_weights.astype(dtype),
                (self.num_users, self.num_items))
        return self._op_cache[key]

    def item_operator(self, dtype=np.float64) -> CsrMatrix:
        """Normalized adjacency block mapping user vectors to item vectors."""
        key = ("item", np.dtype(dtype))
        if key not in self._op_cache:
            self._op_cache[key] = CsrMatrix(
                self.item_indptr, self.item_indices,
                self.item_weights.astype(dtype),
                (self.num_items, self.num_users))
        return self._op_cache[key]


def build_graph(interactions, num_users=None, num_items=None) -> InteractionGraph:
    """Build the bipartite graph from (user_index, item_index) pairs.

    Duplicate pairs collapse to a single edge. Indices must be contiguous and
    0-based: with explicit ``num_users``/``num_items`` every index in range
    must end up with degree >= 1, otherwise the counts are inferred from the
    largest index seen and interior gaps are rejected as isolated nodes.
    """
    pairs = np.asarray(interactions, dtype=np.int64)
    if pairs.size == 0:
        raise DataError("no interactions given")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DataError(f"expected (user, item) pairs, got array of shape {pairs.shape}")
    users, items = pairs[:, 0], pairs[:, 1]
    if users.min() < 0 or items.min() < 0:
        raise DataError("negative user or item index")
    n = int(users.max()) + 1 if num_users is None else int(num_users)
    m = int(items.max()) + 1 if num_items is None else int(num_items)
    if users.max() >= n:
        raise DataError(f"user index {int(users.max())} out of declared range {n}")
    if items.max() >= m:
        raise DataError(f"item index {int(items.max())} out of declared range {m}")

    # canonical order + dedup: sort by (user, item), drop repeated pairs
    order = np.lexsort((items, users))
    users, items = users[order], items[order]
    keep = np.ones(users.shape[0], dtype=bool)
    keep[1:] = (np.diff(users) != 0) | (np.diff(items) != 0)
    users, items = users[keep], items[keep]

    user_degree = np.bincount(users, minlength=n)
    item_degree = np.bincount(items, minlength=m)
    for kind, deg in (("user", user_degree), ("item", item_degree)):
        if deg.min() == 0:
            missing = int(np.flatnonzero(deg == 0)[0])
            raise DataError(f"{kind} {missing} has no interactions (isolated node)")

    weights = 1.0 / np.sqrt(user_degree[users] * item_degree[items].astype(np.float64))
    user_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(user_degree, out=user_indptr[1:])

    item_order = np.lexsort((users, items))
    item_indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(item_degree, out=item_indptr[1:])

    return InteractionGraph(
        num_users=n, num_items=m,
        user_indptr=user_indptr, user_indices=np.ascontiguousarray(items),
        item_indptr=item_indptr, item_indices=np.ascontiguousarray(users[item_order]),
        user_degree=user_degree, item_degree=item_degree,
        user_weights=np.ascontiguousarray(weights),
        item_weights=np.ascontiguousarray(weights[item_order]))


def _global_adjacency(graph: InteractionGraph):
    """One CSR over all N+M global node ids, cached on the graph."""
    key = "global_adjacency"
    if key not in graph._op_cache:
        n = graph.num_users
        indptr = np.concatenate([graph.user_indptr,
                                 graph.item_indptr[1:] + graph.user_indptr[-1]])
        indices = np.concatenate([graph.user_indices + n, graph.item_indices])
        graph._op_cache[key] = (indptr, indices)
    return graph._op_cache[key]


def _take_rows(indptr, indices, rows):
    """Concatenate CSR rows without a per-row Python loop."""
    counts = indptr[rows + 1] - indptr[rows]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=indices.dtype)
    # flat positions: each row's start, repeated, plus a running within-row offset
    starts = np.repeat(indptr[rows], counts)
    row_offsets = np.repeat(np.cumsum(counts) - counts, counts)
    positions = starts + (np.arange(total, dtype=np.int64) - row_offsets)
    return indices[positions]


def _expand_frontier(graph: InteractionGraph, frontier: np.ndarray) -> np.ndarray:
    """All neighbors (global node ids) of the given global node ids."""
    indptr, indices = _global_adjacency(graph)
    return np.unique(_take_rows(indptr, indices, frontier))


def coverage_profile(graph: InteractionGraph, node: int, max_k: int) -> np.ndarray:
    """Fraction of all nodes within <= k hops of ``node`` for k = 0..max_k.

    Single breadth-first sweep over the bipartite graph; the node itself
    counts at every k.
    """
    if not 0 <= node < graph.num_nodes:
        raise DataError(f"node id {node} out of range [0, {graph.num_nodes})")
    if max_k < 0:
        raise ValueError("max_k must be >= 0")
    visited = np.zeros(graph.num_nodes, dtype=bool)
    visited[node] = True
    frontier = np.array([node], dtype=np.int64)
    reached = 1
    out = np.empty(max_k + 1, dtype=np.float64)
    out[0] = reached
    for k in range(1, max_k + 1):
        if frontier.size:
            nbrs = _expand_frontier(graph, frontier)
            frontier = nbrs[~visited[nbrs]]
            visited[frontier] = True
            reached += frontier.size
        out[k] = reached
    return out / graph.num_nodes


def coverage_ratio(graph: InteractionGraph, node: int, k: int) -> float:
    """Share of the graph reachable from ``node`` within at most ``k`` hops."""
    return float(coverage_profile(graph, node, k)[k])


_BITSET_MIN_SOURCES = 128   # below this the per-node sweep is cheaper
_BITSET_BAND = 4096         # sources per band: 64 words of reach state per node


def _per_source_counts(reach: np.ndarray, n_sources: int) -> np.ndarray:
    """How many nodes each source's bit is set on; reach is (nodes, words)."""
    totals = np.zeros(reach.shape[1] * 64, dtype=np.int64)
    for lo in range(0, reach.shape[0], 8192):
        block = reach[lo:lo + 8192].view(np.uint8)
        bits = np.unpackbits(block, axis=1, bitorder="little")
        totals += bits.sum(axis=0, dtype=np.int64)
    return totals[:n_sources]


def _bitset_band_counts(graph: InteractionGraph, sources: np.ndarray,
                        max_k: int) -> np.ndarray:
    """Reachable-node counts per source per hop via a multi-source bit sweep.

    One reduceat pass per hop ORs every node's neighbor words together, so a
    band of up to 64*words sources advances simultaneously. Returns an array
    of shape (max_k + 1, len(sources)).
    """
    indptr, indices = _global_adjacency(graph)
    n = graph.num_nodes
    n_sources = sources.shape[0]
    n_words = (n_sources + 63) // 64
    reach = np.zeros((n, n_words), dtype=np.uint64)
    lanes = np.arange(n_sources)
    np.bitwise_or.at(reach, (sources, lanes // 64),
                     np.uint64(1) << np.uint64(lanes % 64))
    counts = np.empty((max_k + 1, n_sources), dtype=np.int64)
    counts[0] = _per_source_counts(reach, n_sources)
    # cap the neighbor gather at ~64 MB regardless of row density
    edge_budget = max(1, (1 << 23) // max(1, n_words))
    new = np.empty_like(reach)
    for k in range(1, max_k + 1):
        lo = 0
        while lo < n:
            hi = int(np.searchsorted(indptr, indptr[lo] + edge_budget, side="left"))
            hi = min(n, max(hi, lo + 1))
            segment = indices[indptr[lo]:indptr[hi]]
            # every node has degree >= 1, so all reduceat segments are valid
            new[lo:hi] = np.bitwise_or.reduceat(
                reach[segment], indptr[lo:hi] - indptr[lo], axis=0)
            lo = hi
        reach |= new
        counts[k] = _per_source_counts(reach, n_sources)
    return counts


def mean_coverage_profile(graph: InteractionGraph, max_k: int, *,
                          users_only=False, nodes=None,
                          sample_cap=50_000, sample_size=5_000,
                          seed=0) -> np.ndarray:
    """Average coverage profile over nodes, for k = 0..max_k.

    Averages over all nodes by default (``users_only`` restricts to users,
    ``nodes`` to an explicit id set). Beyond ``sample_cap`` candidate nodes a
    seeded uniform sample of ``sample_size`` is used instead of the full
    sweep. Large source sets take the banded bitset sweep; small ones run
    one breadth-first search per node.
    """
    if nodes is None:
        count = graph.num_users if users_only else graph.num_nodes
        nodes = np.arange(count, dtype=np.int64)
    else:
        nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise DataError("no nodes to average coverage over")
    if nodes.min() < 0 or nodes.max() >= graph.num_nodes:
        raise DataError("coverage node id out of range")
    if nodes.size > sample_cap:
        rng = np.random.default_rng(seed)
        nodes = rng.choice(nodes, size=sample_size, replace=False)

    if nodes.size >= _BITSET_MIN_SOURCES and sys.byteorder == "little":
        ratio_sum = np.zeros(max_k + 1, dtype=np.float64)
        for lo in range(0, nodes.size, _BITSET_BAND):
            counts = _bitset_band_counts(graph, nodes[lo:lo + _BITSET_BAND], max_k)
            ratio_sum += (counts / graph.num_nodes).sum(axis=1)
        return ratio_sum / nodes.size

    total = np.zeros(max_k + 1, dtype=np.float64)
    for node in nodes:
        total += coverage_profile(graph, int(node), max_k)
    return total / nodes.size


def mean_coverage(graph: InteractionGraph, k: int, **kwargs) -> float:
    """Average ``coverage_ratio`` at a single k; see mean_coverage_profile."""
    return float(mean_coverage_profile(graph, k, **kwargs)[k])
