import numpy as np
import pytest

from impgcn.graph import build_graph
from impgcn.grouping import partition_from_groups
from impgcn.model import init_model

from oracles import random_bipartite


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path_graph():
    # u0 - i0 - u1 - i1
    return build_graph([(0, 0), (1, 0), (1, 1)])


def make_instance(seed, n_users=12, n_items=9, dim=5, n_groups=3,
                  extra_edges=25, dtype=np.float64):
    """Random graph + state + random (non-degenerate) partition."""
    gen = np.random.default_rng(seed)
    pairs = random_bipartite(gen, n_users, n_items, extra_edges)
    graph = build_graph(pairs)
    state = init_model(graph, dim, n_groups, seed=seed + 1, dtype=dtype)
    groups = gen.integers(0, n_groups, size=n_users)
    partition = partition_from_groups(graph, groups, n_groups, dtype=dtype)
    return pairs, graph, state, partition
