"""Dataset ingestion, k-core filtering, per-user splits, and checkpoints.

Interaction files are line-oriented ``user<sep>item[<sep>extra...]`` with the
separator auto-detected among tab, comma, and whitespace. Splits are made per
user with a seeded shuffle. Checkpoints are a little-endian binary format:

    magic "IMPG" | version u32 | N M d n_groups k_layers (u32 each)
    E0 users then items, row-major float32
    grouping tensors w1 b1 w2 b2 w3 b3, row-major float32
    user id map, item id map: count u32, then per entry
        byte-length u32, UTF-8 external id, internal index u32
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DataError
from .model import GroupingParams, ModelState

CHECKPOINT_MAGIC = b"IMPG"
CHECKPOINT_VERSION = 1


def ingest(path) -> list:
    """Read raw (user, item) string pairs; extra columns are ignored."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    sep = None
    pairs = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if sep is None:
            sep = "\t" if "\t" in line else ("," if "," in line else None)
        fields = line.split(sep) if sep else line.split()
        fields = [f for f in fields if f != ""]
        if len(fields) < 2:
            raise DataError(f"{path}:{ln}: expected 'user{sep or ' '}item', got {line!r}")
        pairs.append((fields[0], fields[1]))
    if not pairs:
        raise DataError(f"{path}: no interactions found")
    return pairs


def k_core_filter(pairs, k: int, single_pass: bool = False) -> list:
    """Keep only users and items with at least ``k`` distinct interactions.

    Duplicates are collapsed first. Peeling iterates to a fixpoint (one
    sweep only with ``single_pass``, for comparison against non-iterative
    preprocessing).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pairs = list(dict.fromkeys(pairs))
    while True:
        user_deg = Counter(u for u, _ in pairs)
        item_deg = Counter(i for _, i in pairs)
        kept = [(u, i) for u, i in pairs
                if user_deg[u] >= k and item_deg[i] >= k]
        if not kept:
            raise DataError(f"no interactions left after {k}-core filtering")
        changed = len(kept) != len(pairs)
        pairs = kept
        if single_pass or not changed:
            return pairs


def map_ids(pairs):
    """Assign contiguous internal ids in first-appearance order."""
    user_map: dict = {}
    item_map: dict = {}
    out = np.empty((len(pairs), 2), dtype=np.int64)
    for row, (u, i) in enumerate(pairs):
        out[row, 0] = user_map.setdefault(u, len(user_map))
        out[row, 1] = item_map.setdefault(i, len(item_map))
    return out, user_map, item_map


@dataclass
class DatasetSplit:
    """Per-user train/validation/test interaction lists (internal ids)."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    user_map: dict
    item_map: dict
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    dropped: list = field(default_factory=list)

    @property
    def num_users(self) -> int:
        return len(self.user_map)

    @property
    def num_items(self) -> int:
        return len(self.item_map)

    def all_pairs(self) -> np.ndarray:
        return np.concatenate([self.train, self.validation, self.test])


def split_per_user(pairs: np.ndarray, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                   user_map=None, item_map=None) -> DatasetSplit:
    """Shuffle each user's interactions and split by the given ratios.

    Validation and test sizes floor to the ratio with a minimum of one
    interaction each, the remainder trains. Items that would appear only in
    validation/test are swapped back into train against another interaction
    of the same user when possible, otherwise that interaction is dropped
    (cold items are unrankable for a pure collaborative model).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DataError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    pairs = np.asarray(pairs, dtype=np.int64)
    rng = np.random.default_rng(seed)

    by_user: dict[int, dict] = {}
    for u, i in pairs:
        by_user.setdefault(int(u), {})[int(i)] = None  # ordered de-dup
    by_user = {u: list(items) for u, items in by_user.items()}

    train, val, test = [], [], []
    need_all = ratios[1] > 0 and ratios[2] > 0
    for u in sorted(by_user):
        items = by_user[u]
        if need_all and len(items) < 3:
            raise DataError(f"user {u} has {len(items)} interactions; "
                            "need >= 3 for a three-way split")
        perm = rng.permutation(len(items))
        n_test = max(int(ratios[2] * len(items)), 1) if ratios[2] > 0 else 0
        n_val = max(int(ratios[1] * len(items)), 1) if ratios[1] > 0 else 0
        for pos, idx in enumerate(perm):
            target = test if pos < n_test else val if pos < n_test + n_val else train
            target.append((u, items[idx]))

    train_count = Counter(i for _, i in train)
    dropped = []

    def repair(split):
        kept = []
        for u, i in split:
            if train_count[i] > 0:
                kept.append((u, i))
                continue
            swap = next((idx for idx, (tu, ti) in enumerate(train)
                         if tu == u and train_count[ti] > 1), None)
            if swap is None:
                dropped.append((u, i))
                continue
            tu, ti = train[swap]
            train[swap] = (u, i)
            train_count[i] += 1
            train_count[ti] -= 1
            kept.append((tu, ti))
        return kept

    val = repair(val)
    test = repair(test)

    def as_array(rows):
        return np.array(sorted(rows), dtype=np.int64).reshape(-1, 2)

    return DatasetSplit(train=as_array(train), validation=as_array(val),
                        test=as_array(test),
                        user_map=dict(user_map or {}), item_map=dict(item_map or {}),
                        ratios=ratios, seed=seed, dropped=dropped)


SPLIT_FILES = {"train": "train.txt", "validation": "validation.txt", "test": "test.txt"}


def write_split(split: DatasetSplit, out_dir) -> None:
    """Write the three manifest files and the id maps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, fname in SPLIT_FILES.items():
        part = getattr(split, name)
        with open(out_dir / fname, "w", encoding="utf-8") as fh:
            for u, i in part:
                fh.write(f"{u}\t{i}\n")
    for fname, mapping in (("user_map.tsv", split.user_map),
                           ("item_map.tsv", split.item_map)):
        with open(out_dir / fname, "w", encoding="utf-8") as fh:
            for ext, internal in sorted(mapping.items(), key=lambda kv: kv[1]):
                fh.write(f"{ext}\t{internal}\n")


def read_split(data_dir) -> DatasetSplit:
    """Load a manifest written by ``write_split``."""
    data_dir = Path(data_dir)

    def read_pairs(fname):
        rows = []
        for ln, line in enumerate((data_dir / fname).read_text().splitlines(), 1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataError(f"{data_dir / fname}:{ln}: malformed manifest line")
            rows.append((int(fields[0]), int(fields[1])))
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def read_map(fname):
        mapping = {}
        path = data_dir / fname
        if not path.exists():
            return mapping
        for line in path.read_text().splitlines():
            if line.strip():
                ext, internal = line.split("\t")
                mapping[ext] = int(internal)
        return mapping

    for fname in SPLIT_FILES.values():
        if not (data_dir / fname).exists():
            raise DataError(f"missing manifest file {data_dir / fname}")
    return DatasetSplit(train=read_pairs("train.txt"),
                        validation=read_pairs("validation.txt"),
                        test=read_pairs("test.txt"),
                        user_map=read_map("user_map.tsv"),
                        item_map=read_map("item_map.tsv"))


def _write_map(fh, mapping: dict) -> None:
    fh.write(struct.pack("<I", len(mapping)))
    for ext, internal in sorted(mapping.items(), key=lambda kv: kv[1]):
        raw = str(ext).encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", internal))


def save_checkpoint(state: ModelState, path, k_layers: int,
                    user_map=None, item_map=None) -> None:
    """Persist ID embeddings and grouping parameters (not Adam buffers)."""
    g = state.grouping
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<6I", CHECKPOINT_VERSION, state.num_users,
                             state.num_items, state.dim, g.num_groups, k_layers))
        for tensor in (state.user_emb, state.item_emb, *g.tensors()):
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
        _write_map(fh, user_map or {})
        _write_map(fh, item_map or {})


def load_checkpoint(path, graph=None):
    """Load a checkpoint; returns ``(state, meta)``.

    ``meta`` carries ``k_layers``, ``num_groups`` and the id maps. When a
    graph is supplied its shape must match the stored embedding tables.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    view = memoryview(blob)
    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, n, m, d, n_groups, k_layers = struct.unpack("<6I", take(24))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version} "
                              f"is not supported (expected {CHECKPOINT_VERSION})")
    if graph is not None and (n != graph.num_users or m != graph.num_items):
        raise CheckpointError(
            f"{path}: checkpoint is for {n} users x {m} items, "
            f"graph has {graph.num_users} x {graph.num_items}")

    def tensor(shape):
        count = int(np.prod(shape))
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        return np.ascontiguousarray(arr)

    user_emb = tensor((n, d))
    item_emb = tensor((m, d))
    grouping = GroupingParams(w1=tensor((d, d)), b1=tensor((d,)),
                              w2=tensor((d, d)), b2=tensor((d,)),
                              w3=tensor((d, n_groups)), b3=tensor((n_groups,)))

    def read_map():
        (count,) = struct.unpack("<I", take(4))
        mapping = {}
        for _ in range(count):
            (length,) = struct.unpack("<I", take(4))
            ext = bytes(take(length)).decode("utf-8")
            (internal,) = struct.unpack("<I", take(4))
            mapping[ext] = internal
        return mapping

    user_map = read_map()
    item_map = read_map()
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    state = ModelState(user_emb=user_emb, item_emb=item_emb, grouping=grouping)
    meta = {"k_layers": int(k_layers), "num_groups": int(n_groups),
            "user_map": user_map, "item_map": item_map}
    return state, meta


def dataset_stats(pairs) -> dict:
    """User/item/interaction counts and sparsity of an interaction list."""
    pairs = list(pairs)
    users = {u for u, _ in pairs}
    items = {i for _, i in pairs}
    count = len(pairs)
    sparsity = 1.0 - count / (len(users) * len(items)) if users and items else 0.0
    return {"users": len(users), "items": len(items),
            "interactions": count, "sparsity": sparsity}
