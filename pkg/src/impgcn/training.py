"""Pairwise ranking optimization: triplet sampling, BPR loss, Adam, the loop.

Each epoch draws one triplet per observed training interaction (uniform
negative via rejection against the user's training positives), refreshes the
user grouping from the current embeddings, and walks mini-batches of
forward / loss / transposed-propagation backward / Adam. Validation runs
periodically and early stopping keeps the state with the best validation
recall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, NumericalError
from .graph import InteractionGraph
from .grouping import build_partition
from .model import ModelState, init_model
from .propagation import MAX_LAYERS, backward, forward

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the common full-ranking CF setup."""

    k_layers: int = 3
    num_groups: int = 3
    dim: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 1024
    l2: float = 1e-4
    max_epochs: int = 1000
    eval_every: int = 5
    patience: int = 10
    seed: int = 0
    ablate_structure: bool = False
    ablate_first_order: bool = False
    subgraph_degrees: bool = False
    refresh_per_batch: bool = False
    precision: str = "float32"
    leaky_slope: float = 0.2
    max_layers: int = MAX_LAYERS

    @property
    def dtype(self):
        return np.dtype(np.float64 if self.precision == "float64" else np.float32)

    def validate(self) -> None:
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if not 0 <= self.k_layers <= self.max_layers:
            raise ValueError(f"layer count must be in [0, {self.max_layers}]")
        positive = {"num_groups": self.num_groups, "dim": self.dim,
                    "learning_rate": self.learning_rate, "batch_size": self.batch_size,
                    "max_epochs": self.max_epochs, "eval_every": self.eval_every,
                    "patience": self.patience}
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.l2 < 0:
            raise ValueError("l2 weight must be >= 0")


class TripletBatch(NamedTuple):
    """Parallel arrays of (user, positive item, negative item)."""

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self) -> int:
        return len(self.users)

    def slice(self, lo: int, hi: int) -> "TripletBatch":
        return TripletBatch(self.users[lo:hi], self.pos_items[lo:hi], self.neg_items[lo:hi])


def sample_negatives(users, pair_keys: np.ndarray, num_items: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Uniform negatives avoiding training positives, by rejection.

    ``pair_keys`` is the sorted array of ``user * num_items + item`` keys of
    all training interactions. Callers must drop users whose positives cover
    every item beforehand.
    """
    users = np.asarray(users, dtype=np.int64)
    neg = rng.integers(0, num_items, size=users.shape[0], dtype=np.int64)
    while True:
        keys = users * num_items + neg
        pos = np.searchsorted(pair_keys, keys)
        pos_clipped = np.minimum(pos, len(pair_keys) - 1)
        bad = (pos < len(pair_keys)) & (pair_keys[pos_clipped] == keys)
        if not bad.any():
            return neg
        neg[bad] = rng.integers(0, num_items, size=int(bad.sum()), dtype=np.int64)


def sample_epoch(train_pairs: np.ndarray, num_items: int,
                 rng: np.random.Generator) -> TripletBatch:
    """One shuffled triplet per training interaction.

    Users holding every item as a positive cannot yield a negative; their
    interactions are skipped with a warning.
    """
    pairs = np.asarray(train_pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise DataError("training interactions must be a non-empty (n, 2) array")
    keys = np.sort(pairs[:, 0] * num_items + pairs[:, 1])
    degree = np.bincount(pairs[:, 0])
    saturated = np.flatnonzero(degree >= num_items)
    if saturated.size:
        logger.warning("users with no negative candidates skipped: %s", saturated.tolist())
        pairs = pairs[~np.isin(pairs[:, 0], saturated)]
        if pairs.shape[0] == 0:
            raise DataError("no sampleable training interactions remain")
    order = rng.permutation(pairs.shape[0])
    users, pos = pairs[order, 0], pairs[order, 1]
    neg = sample_negatives(users, keys, num_items, rng)
    return TripletBatch(users, pos, neg)


def bpr_loss(pos_scores, neg_scores, l2: float = 0.0, reg=0.0):
    """Pairwise logistic ranking loss and its gradient seeds.

    Returns ``(loss, d_pos, d_neg)`` elementwise: ``loss = ln(1 + e^-(p-n))
    + l2 * reg`` and the seeds are ``-sigma(-(p-n))`` and ``+sigma(-(p-n))``.
    The regularizer enters the reported value only; its gradient is applied
    directly on the parameters.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise NumericalError("non-finite ranking scores")
    scalar = pos.ndim == 0 and neg.ndim == 0
    delta = np.atleast_1d(pos - neg)
    loss = np.logaddexp(0.0, -delta) + l2 * np.asarray(reg, dtype=np.float64)
    sig = _sigmoid(-delta)
    if scalar:
        return float(loss[0]), float(-sig[0]), float(sig[0])
    return loss, -sig, sig


def _sigmoid(x):
    # stable on both tails
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class AdamState:
    """First/second moment buffers for the embedding tables."""

    m_user: np.ndarray
    v_user: np.ndarray
    m_item: np.ndarray
    v_item: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, state: ModelState) -> "AdamState":
        return cls(np.zeros_like(state.user_emb), np.zeros_like(state.user_emb),
                   np.zeros_like(state.item_emb), np.zeros_like(state.item_emb))


def adam_step(param, grad, m, v, t: int, lr: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> None:
    """In-place bias-corrected Adam update (step counter ``t`` >= 1)."""
    if t < 1:
        raise ValueError("Adam step counter must be >= 1")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in Adam update")
    m += (1.0 - beta1) * (grad - m)
    v += (1.0 - beta2) * (grad * grad - v)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class TrainResult:
    state: ModelState
    curve: list = field(default_factory=list)  # (epoch, loss, val_recall, val_ndcg)
    group_size_history: list = field(default_factory=list)  # (epoch, sizes)
    best_epoch: int = 0
    best_recall: float = float("nan")


def train(graph: InteractionGraph, train_pairs, config: TrainConfig, *,
          val_pairs=None, state: ModelState | None = None) -> TrainResult:
    """Full training loop; returns the best-validation state and the curve.

    ``val_pairs`` enables periodic evaluation (cutoff 20, training positives
    excluded from the ranking) and early stopping; without it the loop runs
    all epochs and returns the final state.
    """
    from .evaluation import evaluate  # local import to avoid a cycle

    config.validate()
    train_pairs = np.asarray(train_pairs, dtype=np.int64)
    if val_pairs is not None:
        val_pairs = np.asarray(val_pairs, dtype=np.int64)
        if val_pairs.size == 0:
            raise DataError("validation split is empty")

    if state is None:
        state = init_model(graph, config.dim, config.num_groups,
                           config.seed, leaky_slope=config.leaky_slope,
                           dtype=config.dtype)
    state.adam = AdamState.like(state)
    sampler = np.random.default_rng([config.seed, 1])

    exclusions = _pairs_to_sets(train_pairs)
    result = TrainResult(state=state)
    best_state = None
    stale_evals = 0

    for epoch in range(1, config.max_epochs + 1):
        partition = build_partition(
            graph, state, ablate_structure=config.ablate_structure,
            subgraph_degrees=config.subgraph_degrees)
        result.group_size_history.append((epoch, partition.group_sizes.tolist()))

        triplets = sample_epoch(train_pairs, graph.num_items, sampler)
        loss_sum, seen = 0.0, 0
        for lo in range(0, len(triplets), config.batch_size):
            batch = triplets.slice(lo, lo + config.batch_size)
            if config.refresh_per_batch and lo > 0:
                partition = build_partition(
                    graph, state, ablate_structure=config.ablate_structure,
                    subgraph_degrees=config.subgraph_degrees)
            loss = _train_batch(state, graph, partition, batch, config)
            loss_sum += loss * len(batch)
            seen += len(batch)
        epoch_loss = loss_sum / seen
        if not np.isfinite(epoch_loss):
            raise NumericalError(f"training loss diverged at epoch {epoch}: {epoch_loss}")

        val_recall = val_ndcg = float("nan")
        if val_pairs is not None and epoch % config.eval_every == 0:
            report = evaluate(state, graph, _pairs_to_sets(val_pairs),
                              k_layers=config.k_layers, cutoff=20,
                              exclusions=exclusions,
                              ablate_structure=config.ablate_structure,
                              ablate_first_order=config.ablate_first_order,
                              subgraph_degrees=config.subgraph_degrees)
            val_recall, val_ndcg = report.recall, report.ndcg
            if best_state is None or val_recall > result.best_recall:
                result.best_recall = val_recall
                result.best_epoch = epoch
                best_state = state.copy_parameters()
                stale_evals = 0
            else:
                stale_evals += 1
            logger.info("epoch %d loss %.5f val recall@20 %.5f ndcg@20 %.5f",
                        epoch, epoch_loss, val_recall, val_ndcg)
        result.curve.append((epoch, epoch_loss, val_recall, val_ndcg))
        if val_pairs is not None and stale_evals >= config.patience:
            logger.info("early stop at epoch %d (best %.5f at epoch %d)",
                        epoch, result.best_recall, result.best_epoch)
            break

    if best_state is not None:
        result.state = best_state
    return result


def _train_batch(state: ModelState, graph, partition, batch: TripletBatch,
                 config: TrainConfig) -> float:
    u, p, ng = batch
    stack = forward(state, graph, partition, config.k_layers,
                    ablate_first_order=config.ablate_first_order,
                    max_layers=config.max_layers)
    uf, itf = stack.user_final, stack.item_final
    eu, ep, en = uf[u], itf[p], itf[ng]
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
        pos_scores = np.sum(eu * ep, axis=1)
        neg_scores = np.sum(eu * en, axis=1)

    reg = (np.sum(state.user_emb[u].astype(np.float64) ** 2, axis=1)
           + np.sum(state.item_emb[p].astype(np.float64) ** 2, axis=1)
           + np.sum(state.item_emb[ng].astype(np.float64) ** 2, axis=1))
    losses, d_pos, d_neg = bpr_loss(pos_scores, neg_scores, config.l2, reg)
    scale = 1.0 / len(batch)

    dtype = state.dtype
    g_user = np.zeros_like(uf)
    g_item = np.zeros_like(itf)
    d_pos = (d_pos * scale).astype(dtype)
    d_neg = (d_neg * scale).astype(dtype)
    np.add.at(g_user, u, d_pos[:, None] * ep + d_neg[:, None] * en)
    np.add.at(g_item, p, d_pos[:, None] * eu)
    np.add.at(g_item, ng, d_neg[:, None] * eu)

    d_e0u, d_e0i = backward(stack, g_user, g_item, partition)
    reg_coef = dtype.type(2.0 * config.l2 * scale)
    np.add.at(d_e0u, u, reg_coef * state.user_emb[u])
    np.add.at(d_e0i, p, reg_coef * state.item_emb[p])
    np.add.at(d_e0i, ng, reg_coef * state.item_emb[ng])

    adam = state.adam
    adam.t += 1
    adam_step(state.user_emb, d_e0u, adam.m_user, adam.v_user, adam.t, config.learning_rate)
    adam_step(state.item_emb, d_e0i, adam.m_item, adam.v_item, adam.t, config.learning_rate)
    return float(np.mean(losses))


def _pairs_to_sets(pairs) -> dict:
    out: dict[int, set] = {}
    for u, i in np.asarray(pairs, dtype=np.int64):
        out.setdefault(int(u), set()).add(int(i))
    return out
