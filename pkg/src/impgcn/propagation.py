"""Embedding propagation: whole-graph first hop, group-restricted beyond it.

Layer 1 aggregates over the full bipartite graph. From layer 2 on, each
group's state advances only through its own masked operator: a user reads the
per-group copies of its items, a per-group item copy reads only that group's
users, and the layer-k item embedding is the sum of its per-group copies.
Every group's recursion starts from the shared whole-graph layer-1
embeddings, so first-hop information crosses group boundaries exactly once;
with ``ablate_first_order`` the item-side start is masked per group instead,
confining even the first hop to the groups.

All maps are linear with fixed coefficients, so the backward pass is the
transposed propagation. Layer combination uses uniform weights 1/(K+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import InteractionGraph
from .grouping import SubgraphPartition
from .model import ModelState
from .errors import StaleStackError

MAX_LAYERS = 8


@dataclass
class LayerStack:
    """Per-layer embeddings from one forward pass plus the combined result."""

    user_layers: list        # k = 0..K, each (N, d)
    item_layers: list        # k = 0..K, each (M, d)
    user_final: np.ndarray
    item_final: np.ndarray
    graph: InteractionGraph
    partition: SubgraphPartition | None
    ablate_first_order: bool
    # optional, per layer k=1..K: per-group item states (group recursion view)
    group_item_layers: list | None = None

    @property
    def k_layers(self) -> int:
        return len(self.user_layers) - 1

    @property
    def alpha(self) -> float:
        return 1.0 / (self.k_layers + 1)


def _check_partition(graph, partition, k_layers):
    if k_layers >= 2:
        if partition is None:
            raise ValueError("a partition is required for propagation beyond layer 1")
        if partition.graph is not graph:
            raise ValueError("partition was built for a different graph")


def forward(state: ModelState, graph: InteractionGraph,
            partition: SubgraphPartition | None, k_layers: int, *,
            ablate_first_order: bool = False,
            keep_group_layers: bool = False,
            max_layers: int = MAX_LAYERS) -> LayerStack:
    """Run ``k_layers`` of propagation and combine layers uniformly."""
    if k_layers < 0:
        raise ValueError("layer count must be >= 0")
    if k_layers > max_layers:
        raise ValueError(f"layer count {k_layers} exceeds the configured maximum {max_layers}")
    if state.num_users != graph.num_users or state.num_items != graph.num_items:
        raise ValueError("model state does not match graph shape")
    _check_partition(graph, partition, k_layers)

    dtype = state.dtype
    e0u, e0i = state.user_emb, state.item_emb
    u_layers, i_layers = [e0u], [e0i]
    group_items = [] if keep_group_layers else None

    if k_layers >= 1:
        full_u = graph.user_operator(dtype)
        full_i = graph.item_operator(dtype)
        u1 = full_u.matmul(e0i)
        i1 = full_i.matmul(e0u)
        u_layers.append(u1)
        i_layers.append(i1)

        n_groups = partition.num_groups if partition is not None else 0
        if k_layers >= 2:
            if ablate_first_order:
                item_states = [partition.item_ops[s].matmul(e0u) for s in range(n_groups)]
            else:
                item_states = [i1] * n_groups
            user_states = [u1] * n_groups
            if group_items is not None:
                group_items.append([st.copy() for st in item_states])
        elif group_items is not None:
            group_items.append([i1.copy()])

        for _ in range(2, k_layers + 1):
            new_user = [partition.user_ops[s].matmul(item_states[s]) for s in range(n_groups)]
            new_item = [partition.item_ops[s].matmul(user_states[s]) for s in range(n_groups)]
            u_k = np.zeros_like(e0u)
            i_k = np.zeros_like(e0i)
            for s in range(n_groups):
                u_k += new_user[s]
                i_k += new_item[s]
            u_layers.append(u_k)
            i_layers.append(i_k)
            user_states, item_states = new_user, new_item
            if group_items is not None:
                group_items.append(new_item)

    alpha = 1.0 / (k_layers + 1)
    user_final = np.zeros_like(e0u)
    item_final = np.zeros_like(e0i)
    for uk, ik in zip(u_layers, i_layers):
        user_final += uk
        item_final += ik
    user_final *= dtype.type(alpha)
    item_final *= dtype.type(alpha)

    return LayerStack(user_layers=u_layers, item_layers=i_layers,
                      user_final=user_final, item_final=item_final,
                      graph=graph, partition=partition,
                      ablate_first_order=ablate_first_order,
                      group_item_layers=group_items)


def backward(stack: LayerStack, grad_users: np.ndarray, grad_items: np.ndarray,
             partition: SubgraphPartition | None = None):
    """Gradients of the combined embeddings back onto the ID embeddings.

    ``grad_users``/``grad_items`` are the upstream gradients on the final
    (combined) embeddings. Passing the trainer's current partition checks
    that the stack is not stale. Returns ``(d_user_emb, d_item_emb)``.
    """
    if partition is not None and partition is not stack.partition:
        raise StaleStackError("partition changed since this forward pass")
    k = stack.k_layers
    graph = stack.graph
    dtype = stack.user_final.dtype
    alpha = dtype.type(1.0 / (k + 1))
    gu = np.asarray(grad_users, dtype=dtype) * alpha
    gi = np.asarray(grad_items, dtype=dtype) * alpha
    if gu.shape != stack.user_final.shape or gi.shape != stack.item_final.shape:
        raise ValueError("upstream gradient shapes do not match the stack")

    d_e0u = gu.copy()
    d_e0i = gi.copy()
    if k == 0:
        return d_e0u, d_e0i

    part = stack.partition
    n_groups = part.num_groups if part is not None else 0
    du1 = gu.copy()
    di1 = gi.copy()

    if k >= 2:
        d_user = [gu.copy() for _ in range(n_groups)]
        d_item = [gi.copy() for _ in range(n_groups)]
        # walk layers K..3: produce gradients at layers K-1..2, each of which
        # also receives its own combination term
        for _ in range(k, 2, -1):
            new_d_item = [part.item_ops[s].matmul(d_user[s]) + gi for s in range(n_groups)]
            new_d_user = [part.user_ops[s].matmul(d_item[s]) + gu for s in range(n_groups)]
            d_user, d_item = new_d_user, new_d_item
        # into the layer-1 seeds (no combination term here; layer 1 is
        # accounted through du1/di1 or, for the masked start, directly)
        seed_d_item = [part.item_ops[s].matmul(d_user[s]) for s in range(n_groups)]
        seed_d_user = [part.user_ops[s].matmul(d_item[s]) for s in range(n_groups)]
        for s in range(n_groups):
            du1 += seed_d_user[s]
        if stack.ablate_first_order:
            # item seeds were built straight from the ID embeddings
            for s in range(n_groups):
                d_e0u += part.user_ops[s].matmul(seed_d_item[s])
        else:
            for s in range(n_groups):
                di1 += seed_d_item[s]

    d_e0u += graph.user_operator(dtype).matmul(di1)
    d_e0i += graph.item_operator(dtype).matmul(du1)
    return d_e0u, d_e0i


def predict(e_u, e_i) -> float:
    """Preference score: inner product of final user and item embeddings."""
    e_u = np.asarray(e_u)
    e_i = np.asarray(e_i)
    if e_u.shape != e_i.shape:
        raise ValueError(f"embedding shapes differ: {e_u.shape} vs {e_i.shape}")
    return float(np.dot(e_u, e_i))


def forward_nodeform(state: ModelState, graph: InteractionGraph,
                     partition: SubgraphPartition | None, k_layers: int, *,
                     ablate_first_order: bool = False):
    """Per-node reference implementation of the propagation rule.

    Plain Python loops over neighbor lists with coefficients
    ``1/sqrt(|N_u|*|N_i|)`` recomputed from degrees; deliberately shares no
    code with the production path. Returns ``(user_layers, item_layers,
    user_final, item_final, group_item_layers)`` in float64.
    """
    if k_layers < 0:
        raise ValueError("layer count must be >= 0")
    _check_partition(graph, partition, k_layers)
    n, m, d = graph.num_users, graph.num_items, state.dim

    def w(u, i):
        return 1.0 / np.sqrt(float(graph.user_degree[u]) * float(graph.item_degree[i]))

    e0u = state.user_emb.astype(np.float64)
    e0i = state.item_emb.astype(np.float64)
    u_layers, i_layers = [e0u], [e0i]
    group_item_layers = []

    if k_layers >= 1:
        u1 = np.zeros((n, d))
        for u in range(n):
            for i in graph.user_items(u):
                u1[u] += w(u, i) * e0i[i]
        i1 = np.zeros((m, d))
        for i in range(m):
            for u in graph.item_users(i):
                i1[i] += w(u, i) * e0u[u]
        u_layers.append(u1)
        i_layers.append(i1)

        if k_layers >= 2:
            s_count = partition.num_groups
            grp = partition.group_of_user
            # per-group states; users hold their own rows, items one copy per group
            user_state = np.zeros((s_count, n, d))
            item_state = np.zeros((s_count, m, d))
            for u in range(n):
                user_state[grp[u], u] = u1[u]
            for i in range(m):
                for s in range(s_count):
                    if not partition.item_group_mask[i, s]:
                        continue
                    if ablate_first_order:
                        for u in graph.item_users(i):
                            if grp[u] == s:
                                item_state[s, i] += w(u, i) * e0u[u]
                    else:
                        item_state[s, i] = i1[i]
            group_item_layers.append([item_state[s].copy() for s in range(s_count)])

            for _ in range(2, k_layers + 1):
                next_user = np.zeros((s_count, n, d))
                next_item = np.zeros((s_count, m, d))
                for u in range(n):
                    s = grp[u]
                    for i in graph.user_items(u):
                        next_user[s, u] += w(u, i) * item_state[s, i]
                for i in range(m):
                    for u in graph.item_users(i):
                        next_item[grp[u], i] += w(u, i) * user_state[grp[u], u]
                user_state, item_state = next_user, next_item
                u_layers.append(user_state.sum(axis=0))
                i_layers.append(item_state.sum(axis=0))
                group_item_layers.append([item_state[s].copy() for s in range(s_count)])

    alpha = 1.0 / (k_layers + 1)
    user_final = alpha * sum(u_layers)
    item_final = alpha * sum(i_layers)
    return u_layers, i_layers, user_final, item_final, group_item_layers
