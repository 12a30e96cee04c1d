"""Full-ranking evaluation: Recall@n and NDCG@n over all unseen items."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import InteractionGraph
from .grouping import SubgraphPartition, build_partition
from .model import ModelState
from .propagation import forward


@dataclass
class MetricsReport:
    """Mean metrics at one cutoff, over the users that had test items."""

    cutoff: int
    recall: float
    ndcg: float
    num_users: int
    per_user: dict | None = None   # user -> (recall, ndcg)
    per_group: dict | None = None  # group -> (recall, ndcg, num_users)

    def rows(self):
        """(metric, cutoff, value) rows for the metrics file."""
        return [("recall", self.cutoff, self.recall), ("ndcg", self.cutoff, self.ndcg)]


def rank_items(scores: np.ndarray, excluded=()) -> np.ndarray:
    """Items by descending score, equal scores by ascending index.

    ``excluded`` items are removed from the ranking entirely.
    """
    scores = np.asarray(scores)
    mask = np.ones(scores.shape[0], dtype=bool)
    excluded = list(excluded)
    if excluded:
        mask[excluded] = False
    candidates = np.flatnonzero(mask)
    if candidates.size == 0:
        raise DataError("every item is excluded for this user")
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order]


def recall_at_n(ranked, test_items, n: int) -> float:
    """|top-n hits| / |test items|."""
    test_items = set(test_items)
    if not test_items:
        raise DataError("empty test set for recall")
    hits = sum(1 for item in ranked[:n] if item in test_items)
    return hits / len(test_items)


def ndcg_at_n(ranked, test_items, n: int) -> float:
    """Binary-gain NDCG: hit at 1-based position p contributes 1/log2(p+1)."""
    test_items = set(test_items)
    if not test_items:
        raise DataError("empty test set for ndcg")
    dcg = sum(1.0 / math.log2(p + 2)
              for p, item in enumerate(ranked[:n]) if item in test_items)
    ideal = sum(1.0 / math.log2(p + 2) for p in range(min(len(test_items), n)))
    return dcg / ideal


def evaluate(state: ModelState, graph: InteractionGraph, test_by_user: dict, *,
             k_layers: int, cutoff: int = 20, exclusions: dict | None = None,
             partition: SubgraphPartition | None = None,
             ablate_structure: bool = False, ablate_first_order: bool = False,
             subgraph_degrees: bool = False, keep_per_user: bool = False,
             per_group: bool = False) -> MetricsReport:
    """Rank every test user's unseen items and average the metrics.

    ``test_by_user`` maps user -> set of held-out items; users with an empty
    set are skipped (not counted as zero). ``exclusions`` maps user -> items
    to drop from the candidate ranking (typically all interactions seen
    during training and validation). The partition is rebuilt from the
    current state unless one is passed in.
    """
    users = sorted(u for u, items in test_by_user.items() if items)
    if not users:
        raise DataError("empty test split")
    if partition is None:
        partition = build_partition(graph, state, ablate_structure=ablate_structure,
                                    subgraph_degrees=subgraph_degrees)
    stack = forward(state, graph, partition, k_layers,
                    ablate_first_order=ablate_first_order)
    exclusions = exclusions or {}

    per_user = {}
    for u in users:
        scores = stack.item_final @ stack.user_final[u]
        ranked = rank_items(scores, exclusions.get(u, ()))
        items = test_by_user[u]
        per_user[u] = (recall_at_n(ranked, items, cutoff),
                       ndcg_at_n(ranked, items, cutoff))

    values = np.array(list(per_user.values()))
    group_table = None
    if per_group:
        group_table = {}
        labels = partition.group_of_user[users]
        for s in range(partition.num_groups):
            rows = values[labels == s]
            if rows.size:
                group_table[s] = (float(rows[:, 0].mean()), float(rows[:, 1].mean()),
                                  int(rows.shape[0]))
    return MetricsReport(cutoff=cutoff,
                         recall=float(values[:, 0].mean()),
                         ndcg=float(values[:, 1].mean()),
                         num_users=len(users),
                         per_user=per_user if keep_per_user else None,
                         per_group=group_table)
