"""Embedding tables and user-grouping parameters.

The grouping network is a frozen random projection: it is Xavier-initialized
once per run and receives no gradient (the hard argmax in the classifier
blocks any), so similar embeddings keep mapping to the same group while the
embeddings themselves train.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graph import InteractionGraph


@dataclass
class GroupingParams:
    """Weights of the fusion layer and the 2-layer group classifier."""

    w1: np.ndarray  # (d, d) fusion
    b1: np.ndarray  # (d,)
    w2: np.ndarray  # (d, d) hidden
    b2: np.ndarray  # (d,)
    w3: np.ndarray  # (d, n_groups) output
    b3: np.ndarray  # (n_groups,)
    leaky_slope: float = 0.2

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def num_groups(self) -> int:
        return self.w3.shape[1]

    def tensors(self):
        """Parameter tensors in canonical (checkpoint) order."""
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def validate(self) -> None:
        d, g = self.dim, self.num_groups
        shapes = ((d, d), (d,), (d, d), (d,), (d, g), (g,))
        for tensor, expect in zip(self.tensors(), shapes):
            if tensor.shape != expect:
                raise ValueError(f"grouping tensor shape {tensor.shape} != {expect}")
            if not np.all(np.isfinite(tensor)):
                raise ValueError("grouping parameters contain non-finite entries")


@dataclass
class ModelState:
    """Trainable state: ID embeddings plus the frozen grouping network."""

    user_emb: np.ndarray  # (num_users, d)
    item_emb: np.ndarray  # (num_items, d)
    grouping: GroupingParams
    adam: Any = None  # AdamState, attached by the trainer
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.user_emb.shape[1]

    @property
    def num_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_emb.shape[0]

    @property
    def dtype(self):
        return self.user_emb.dtype

    def copy_parameters(self) -> "ModelState":
        """Deep copy of everything the checkpoint persists (no Adam buffers)."""
        g = self.grouping
        grouping = GroupingParams(g.w1.copy(), g.b1.copy(), g.w2.copy(), g.b2.copy(),
                                  g.w3.copy(), g.b3.copy(), g.leaky_slope)
        return ModelState(self.user_emb.copy(), self.item_emb.copy(), grouping)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_grouping(rng: np.random.Generator, dim: int, num_groups: int,
                  leaky_slope: float = 0.2, dtype=np.float32) -> GroupingParams:
    """Xavier-uniform weights, zero biases."""
    return GroupingParams(
        w1=xavier_uniform(rng, dim, dim, (dim, dim), dtype),
        b1=np.zeros(dim, dtype=dtype),
        w2=xavier_uniform(rng, dim, dim, (dim, dim), dtype),
        b2=np.zeros(dim, dtype=dtype),
        w3=xavier_uniform(rng, dim, num_groups, (dim, num_groups), dtype),
        b3=np.zeros(num_groups, dtype=dtype),
        leaky_slope=leaky_slope,
    )


def init_model(graph: InteractionGraph, dim: int, num_groups: int, seed: int,
               *, leaky_slope: float = 0.2, dtype=np.float32) -> ModelState:
    """Fresh model state with Xavier-uniform embeddings.

    Embedding rows use bound sqrt(6 / (2 d)); draw order (users, items,
    grouping) is fixed so a seed pins the whole state.
    """
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    user_emb = xavier_uniform(rng, dim, dim, (graph.num_users, dim), dtype)
    item_emb = xavier_uniform(rng, dim, dim, (graph.num_items, dim), dtype)
    grouping = init_grouping(rng, dim, num_groups, leaky_slope, dtype)
    return ModelState(user_emb=user_emb, item_emb=item_emb, grouping=grouping)
