"""Interest-aware message-passing graph convolution for recommendation.

Submodules are loaded lazily so the CLI can pin thread limits before numpy
is imported.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "InteractionGraph": "graph", "build_graph": "graph",
    "coverage_ratio": "graph", "coverage_profile": "graph",
    "mean_coverage": "graph", "mean_coverage_profile": "graph",
    "GroupingParams": "model", "ModelState": "model", "init_model": "model",
    "SubgraphPartition": "grouping", "build_partition": "grouping",
    "partition_from_groups": "grouping", "fuse_features": "grouping",
    "classify_users": "grouping",
    "LayerStack": "propagation", "forward": "propagation",
    "backward": "propagation", "predict": "propagation",
    "forward_nodeform": "propagation",
    "TrainConfig": "training", "TrainResult": "training", "train": "training",
    "bpr_loss": "training", "adam_step": "training", "sample_epoch": "training",
    "MetricsReport": "evaluation", "evaluate": "evaluation",
    "rank_items": "evaluation", "recall_at_n": "evaluation", "ndcg_at_n": "evaluation",
    "DatasetSplit": "data", "ingest": "data", "k_core_filter": "data",
    "map_ids": "data", "split_per_user": "data",
    "save_checkpoint": "data", "load_checkpoint": "data",
    "write_split": "data", "read_split": "data",
    "DataError": "errors", "UsageError": "errors",
    "NumericalError": "errors", "CheckpointError": "errors",
    "StaleStackError": "errors",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    return getattr(importlib.import_module(f".{module}", __name__), name)
