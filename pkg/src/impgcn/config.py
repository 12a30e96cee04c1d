"""Declarative run configuration.

Every option has one canonical key usable in three places with fixed
precedence: command-line flag beats ``IMPGCN_<KEY>`` environment variable
beats ``key=value`` config file line beats the built-in default. Unknown
keys in a config file are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError

ENV_PREFIX = "IMPGCN_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class Option:
    type: type
    default: object
    help: str


SCHEMA: dict[str, Option] = {
    # paths
    "input": Option(str, None, "raw interaction file (prepare)"),
    "data": Option(str, None, "prepared dataset directory"),
    "out": Option(str, None, "output directory"),
    "checkpoint": Option(str, None, "model checkpoint path"),
    # model
    "model": Option(str, "impgcn", "impgcn or lightgcn (lightgcn = one group)"),
    "layers": Option(int, 3, "propagation depth K"),
    "groups": Option(int, 3, "number of user interest groups"),
    "dim": Option(int, 64, "embedding size"),
    "max_layers": Option(int, 8, "hard cap on propagation depth"),
    "leaky_slope": Option(float, 0.2, "LeakyReLU negative slope in the grouper"),
    # training
    "lr": Option(float, 1e-3, "Adam learning rate"),
    "batch_size": Option(int, 1024, "triplets per mini-batch"),
    "l2": Option(float, 1e-4, "L2 regularization weight"),
    "epochs": Option(int, 1000, "maximum training epochs"),
    "eval_every": Option(int, 5, "validate every this many epochs"),
    "patience": Option(int, 10, "stale validations before early stop"),
    "seed": Option(int, 0, "seed for init, sampling, and splitting"),
    "precision": Option(str, "float32", "float32 or float64"),
    "ablate_structure": Option(bool, False, "group on ID embeddings only"),
    "ablate_first_order": Option(bool, False, "mask the first hop per group too"),
    "subgraph_degrees": Option(bool, False, "per-group item degrees in masked weights"),
    "refresh_per_batch": Option(bool, False, "regroup users every batch, not epoch"),
    # data preparation
    "k_core": Option(int, 10, "minimum interactions per user and item"),
    "single_pass_kcore": Option(bool, False, "one peeling sweep instead of a fixpoint"),
    "ratios": Option(str, "0.8,0.1,0.1", "train,validation,test fractions per user"),
    # evaluation / diagnostics
    "split": Option(str, "test", "split to evaluate: train, validation, or test"),
    "cutoff": Option(int, 20, "ranking cutoff n for recall/ndcg"),
    "per_group": Option(bool, False, "also report per-group numbers"),
    "max_k": Option(int, 7, "largest hop count for coverage"),
    "users_only": Option(bool, False, "average coverage over user nodes only"),
    "train_only": Option(bool, False, "coverage on the training graph only"),
    # execution
    "threads": Option(int, 1, "BLAS/OpenMP threads; 1 is bitwise deterministic"),
}


def parse_value(key: str, raw: str):
    option = SCHEMA[key]
    if option.type is bool:
        lowered = str(raw).strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return option.type(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{key}: expected {option.type.__name__}, got {raw!r}") from exc


def load_file(path) -> dict:
    """Parse a flat key=value config file; '#' starts a comment line."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise UsageError(f"{path}:{ln}: unknown config key {key!r}")
        values[key] = parse_value(key, raw.strip())
    return values


def from_env(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    values = {}
    for key in SCHEMA:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = parse_value(key, raw)
    return values


def resolve(file_path=None, flag_values=None, environ=None):
    """Merge all sources; returns ``(config, explicitly_provided_keys)``."""
    config = {key: option.default for key, option in SCHEMA.items()}
    provided = set()
    for layer in (load_file(file_path) if file_path else {},
                  from_env(environ),
                  {k: v for k, v in (flag_values or {}).items() if v is not None}):
        for key, value in layer.items():
            if key not in SCHEMA:
                raise UsageError(f"unknown config key {key!r}")
            config[key] = value
            provided.add(key)
    return config, provided


def parse_ratios(raw: str):
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    try:
        ratios = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"ratios: expected comma-separated floats, got {raw!r}") from exc
    if len(ratios) != 3:
        raise UsageError(f"ratios: expected three values, got {raw!r}")
    return ratios


def echo_config(config: dict, path) -> None:
    """Write the effective configuration, one sorted key=value per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(config):
            value = config[key]
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{key}={value}\n")
