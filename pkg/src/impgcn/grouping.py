"""User interest groups and the masked propagation operators they induce.

Every user lands in exactly one group; an item belongs to every group that
contains at least one of its users. Masking keeps an edge iff its user
endpoint is in the group, so the per-group operators sum back to the full
normalized adjacency edge for edge.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .graph import InteractionGraph
from .model import GroupingParams, ModelState
from .sparse import CsrMatrix, csr_from_sorted_coo

logger = logging.getLogger(__name__)

_revision_counter = itertools.count(1)


def leaky_relu(x, slope):
    x = np.asarray(x)
    return np.where(x >= 0, x, slope * x)


def fuse_features(e0, e1, params: GroupingParams, ablate_structure: bool = False):
    """Fuse ID embeddings with first-hop aggregates into per-user features.

    ``LeakyReLU((e0 + e1) @ w1 + b1)`` row-wise; with ``ablate_structure``
    the first-hop term is dropped so features depend on the ID embedding
    only. Accepts a single d-vector or an (n, d) batch.
    """
    e0 = np.asarray(e0)
    e1 = np.zeros_like(e0) if ablate_structure else np.asarray(e1)
    if e0.shape != e1.shape or e0.shape[-1] != params.dim:
        raise ValueError(f"feature shapes {e0.shape}/{e1.shape} do not match dim {params.dim}")
    return leaky_relu((e0 + e1) @ params.w1 + params.b1, params.leaky_slope)


def classify_users(features, params: GroupingParams):
    """Group index per feature row; ties resolve to the lowest index.

    Two-layer head: LeakyReLU hidden layer, then a linear projection to one
    score per group, argmax over scores.
    """
    features = np.asarray(features)
    hidden = leaky_relu(features @ params.w2 + params.b2, params.leaky_slope)
    scores = hidden @ params.w3 + params.b3
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite group scores")
    return np.argmax(scores, axis=-1)


@dataclass(frozen=True)
class SubgraphPartition:
    """A user grouping plus the per-group masked adjacency operators."""

    graph: InteractionGraph
    group_of_user: np.ndarray          # (N,) int64, values in [0, num_groups)
    user_ops: tuple                    # per group: CsrMatrix (N, M), rows of non-members empty
    item_ops: tuple                    # per group: CsrMatrix (M, N), only members' edges
    item_group_mask: np.ndarray        # (M, num_groups) bool
    revision: int

    @property
    def num_groups(self) -> int:
        return len(self.user_ops)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_of_user, minlength=self.num_groups)

    def item_groups(self, item: int) -> tuple:
        """Groups the item belongs to (has at least one interacting user in)."""
        return tuple(np.flatnonzero(self.item_group_mask[item]))


def build_partition(graph: InteractionGraph, state: ModelState, *,
                    params: GroupingParams | None = None,
                    ablate_structure: bool = False,
                    subgraph_degrees: bool = False,
                    dtype=None) -> SubgraphPartition:
    """Assign every user to a group and materialize the masked operators.

    The structural feature is one whole-graph aggregation step from the
    current item embeddings. Empty groups are allowed (their operators have
    no entries); a size histogram is logged at each refresh so collapse is
    visible.

    ``subgraph_degrees`` switches the masked edge weights from the
    full-graph degrees to per-group item degrees (comparison variant; with
    it the per-group operators no longer sum to the full adjacency).
    """
    params = state.grouping if params is None else params
    params.validate()
    if params.dim != state.dim:
        raise ValueError(f"grouping dim {params.dim} != embedding dim {state.dim}")
    if state.num_users != graph.num_users or state.num_items != graph.num_items:
        raise ValueError("model state does not match graph shape")
    dtype = np.dtype(state.dtype if dtype is None else dtype)

    e1_users = graph.user_operator(dtype).matmul(state.item_emb.astype(dtype, copy=False))
    features = fuse_features(state.user_emb.astype(dtype, copy=False), e1_users,
                             params, ablate_structure)
    groups = np.ascontiguousarray(classify_users(features, params), dtype=np.int64)
    return partition_from_groups(graph, groups, params.num_groups,
                                 subgraph_degrees=subgraph_degrees, dtype=dtype)


def partition_from_groups(graph: InteractionGraph, group_of_user, num_groups: int,
                          *, subgraph_degrees: bool = False,
                          dtype=np.float64) -> SubgraphPartition:
    """Materialize masked operators for an explicit user->group assignment."""
    group_of_user = np.ascontiguousarray(group_of_user, dtype=np.int64)
    if group_of_user.shape != (graph.num_users,):
        raise ValueError("need exactly one group per user")
    if group_of_user.min() < 0 or group_of_user.max() >= num_groups:
        raise ValueError(f"group labels outside [0, {num_groups})")
    dtype = np.dtype(dtype)

    n, m = graph.num_users, graph.num_items
    # group of each stored edge, in both CSR orders
    edge_user_rows = np.repeat(np.arange(n, dtype=np.int64), graph.user_degree)
    edge_groups_u = group_of_user[edge_user_rows]
    edge_item_rows = np.repeat(np.arange(m, dtype=np.int64), graph.item_degree)
    edge_groups_i = group_of_user[graph.item_indices]

    item_mask = np.zeros((m, num_groups), dtype=bool)
    item_mask[edge_item_rows, edge_groups_i] = True

    if subgraph_degrees:
        # per-group item degree replaces the full-graph one in the weights
        weights_u = np.empty_like(graph.user_weights)
        weights_i = np.empty_like(graph.item_weights)
        for s in range(num_groups):
            sel_i = edge_groups_i == s
            deg_s = np.bincount(edge_item_rows[sel_i], minlength=m)
            w = 1.0 / np.sqrt(graph.user_degree[graph.item_indices[sel_i]]
                              * deg_s[edge_item_rows[sel_i]].astype(np.float64))
            weights_i[sel_i] = w
            sel_u = edge_groups_u == s
            weights_u[sel_u] = 1.0 / np.sqrt(
                graph.user_degree[edge_user_rows[sel_u]]
                * deg_s[graph.user_indices[sel_u]].astype(np.float64))
    else:
        weights_u = graph.user_weights
        weights_i = graph.item_weights

    user_ops, item_ops = [], []
    for s in range(num_groups):
        sel = edge_groups_u == s
        user_ops.append(csr_from_sorted_coo(
            edge_user_rows[sel], graph.user_indices[sel],
            weights_u[sel].astype(dtype), (n, m)))
        sel = edge_groups_i == s
        item_ops.append(csr_from_sorted_coo(
            edge_item_rows[sel], graph.item_indices[sel],
            weights_i[sel].astype(dtype), (m, n)))

    sizes = np.bincount(group_of_user, minlength=num_groups)
    if np.any(sizes == 0):
        logger.warning("empty user groups: %s", np.flatnonzero(sizes == 0).tolist())
    logger.info("group sizes: %s", sizes.tolist())

    return SubgraphPartition(
        graph=graph, group_of_user=group_of_user,
        user_ops=tuple(user_ops), item_ops=tuple(item_ops),
        item_group_mask=item_mask, revision=next(_revision_counter))
