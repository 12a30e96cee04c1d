"""Command-line surface: prepare, train, eval, coverage, groups.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Heavy imports happen inside the command handlers so that the thread limit
can be pinned in the environment before numpy loads.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .errors import DataError, NumericalError, UsageError

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _add_config_flags(parser, keys):
    for key in keys:
        option = cfgmod.SCHEMA[key]
        flag = "--" + key.replace("_", "-")
        if option.type is bool:
            parser.add_argument(flag, dest=key, default=None,
                                action=argparse.BooleanOptionalAction,
                                help=option.help)
        else:
            parser.add_argument(flag, dest=key, default=None,
                                type=option.type, help=option.help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="impgcn",
                     description="Interest-aware message-passing graph "
                                 "convolution for implicit-feedback recommendation.")
    # accepted both before and after the subcommand; the sub-level copies use
    # SUPPRESS so an absent flag cannot clobber a value parsed at the top level
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="key=value config file")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="info-level logging")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="filter, index, and split a raw interaction file")
    _add_config_flags(p, ["input", "out", "k_core", "single_pass_kcore",
                          "ratios", "seed", "threads"])

    p = sub.add_parser("train", parents=[common], help="train a model on a prepared dataset")
    _add_config_flags(p, ["data", "out", "model", "layers", "groups", "dim",
                          "lr", "batch_size", "l2", "epochs", "eval_every",
                          "patience", "seed", "precision", "leaky_slope",
                          "max_layers", "ablate_structure", "ablate_first_order",
                          "subgraph_degrees", "refresh_per_batch", "threads"])
    p.add_argument("--ablate", action="append", default=None,
                   choices=["structure", "first-order"],
                   help="shorthand for the ablation flags; repeatable")

    p = sub.add_parser("eval", parents=[common], help="rank and score a checkpoint on a split")
    _add_config_flags(p, ["checkpoint", "data", "out", "split", "cutoff",
                          "layers", "per_group", "leaky_slope", "ablate_structure",
                          "ablate_first_order", "subgraph_degrees", "threads"])

    p = sub.add_parser("coverage", parents=[common], help="mean k-hop coverage table")
    _add_config_flags(p, ["data", "out", "max_k", "users_only", "train_only",
                          "per_group", "checkpoint", "leaky_slope", "seed",
                          "threads"])

    p = sub.add_parser("groups", parents=[common], help="dump the user-to-group assignment")
    _add_config_flags(p, ["checkpoint", "data", "out", "leaky_slope",
                          "ablate_structure", "threads"])
    return parser


def _pin_threads(argv, environ=os.environ) -> None:
    """Resolve the thread limit before numpy is imported anywhere.

    Same precedence as the full config resolution: flag, then environment,
    then config file, then the built-in default.
    """
    from_flag = from_file = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            from_flag = argv[i + 1]
        elif arg.startswith("--threads="):
            from_flag = arg.split("=", 1)[1]
        elif arg == "--config" and i + 1 < len(argv):
            from_file = cfgmod.load_file(argv[i + 1]).get("threads", from_file)
        elif arg.startswith("--config="):
            from_file = cfgmod.load_file(arg.split("=", 1)[1]).get("threads", from_file)
    threads = from_flag
    if threads is None:
        threads = environ.get(cfgmod.ENV_PREFIX + "THREADS")
    if threads is None:
        threads = from_file
    if threads is None:
        threads = cfgmod.SCHEMA["threads"].default
    threads = int(threads)
    if threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
            environ[var] = str(threads)


def _resolve(args) -> tuple[dict, set]:
    flags = {key: getattr(args, key) for key in cfgmod.SCHEMA if hasattr(args, key)}
    cfg, provided = cfgmod.resolve(args.config, flags)
    for name in getattr(args, "ablate", None) or []:
        key = "ablate_structure" if name == "structure" else "ablate_first_order"
        cfg[key] = True
        provided.add(key)
    return cfg, provided


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise UsageError(f"missing required option --{key.replace('_', '-')}")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_config(cfg):
    from .training import TrainConfig

    if cfg["model"] not in ("impgcn", "lightgcn"):
        raise UsageError(f"unknown model {cfg['model']!r}")
    groups = 1 if cfg["model"] == "lightgcn" else cfg["groups"]
    tc = TrainConfig(k_layers=cfg["layers"], num_groups=groups, dim=cfg["dim"],
                     learning_rate=cfg["lr"], batch_size=cfg["batch_size"],
                     l2=cfg["l2"], max_epochs=cfg["epochs"],
                     eval_every=cfg["eval_every"], patience=cfg["patience"],
                     seed=cfg["seed"], ablate_structure=cfg["ablate_structure"],
                     ablate_first_order=cfg["ablate_first_order"],
                     subgraph_degrees=cfg["subgraph_degrees"],
                     refresh_per_batch=cfg["refresh_per_batch"],
                     precision=cfg["precision"], leaky_slope=cfg["leaky_slope"],
                     max_layers=cfg["max_layers"])
    try:
        tc.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return tc


def _load_split(cfg):
    from .data import read_split

    _require(cfg, "data")
    return read_split(cfg["data"])


def _training_graph(split):
    from .graph import build_graph

    n = split.num_users or None
    m = split.num_items or None
    return build_graph(split.train, num_users=n, num_items=m)


def cmd_prepare(cfg, provided) -> int:
    from .data import dataset_stats, ingest, k_core_filter, map_ids, split_per_user, write_split

    _require(cfg, "input", "out")
    out = _out_dir(cfg)
    ratios = cfgmod.parse_ratios(cfg["ratios"])
    pairs = ingest(cfg["input"])
    filtered = k_core_filter(pairs, cfg["k_core"], single_pass=cfg["single_pass_kcore"])
    int_pairs, user_map, item_map = map_ids(filtered)
    split = split_per_user(int_pairs, ratios, cfg["seed"],
                           user_map=user_map, item_map=item_map)
    write_split(split, out)

    stats = dataset_stats(filtered)
    with open(out / "stats.txt", "w", encoding="utf-8") as fh:
        fh.write(f"users\t{stats['users']}\n")
        fh.write(f"items\t{stats['items']}\n")
        fh.write(f"interactions\t{stats['interactions']}\n")
        fh.write(f"sparsity\t{100.0 * stats['sparsity']:.2f}%\n")
        fh.write(f"train\t{len(split.train)}\n")
        fh.write(f"validation\t{len(split.validation)}\n")
        fh.write(f"test\t{len(split.test)}\n")
        fh.write(f"dropped\t{len(split.dropped)}\n")
    cfgmod.echo_config(cfg, out / "effective-config.txt")
    print(f"prepared {stats['interactions']} interactions "
          f"({stats['users']} users x {stats['items']} items) -> {out}")
    return 0


def cmd_train(cfg, provided) -> int:
    from .data import save_checkpoint
    from .training import train

    _require(cfg, "data", "out")
    out = _out_dir(cfg)
    split = _load_split(cfg)
    graph = _training_graph(split)
    tc = _train_config(cfg)
    val = split.validation if len(split.validation) else None
    result = train(graph, split.train, tc, val_pairs=val)

    save_checkpoint(result.state, out / "checkpoint.impg", tc.k_layers,
                    user_map=split.user_map, item_map=split.item_map)
    with open(out / "curve.tsv", "w", encoding="utf-8") as fh:
        for epoch, loss, recall, ndcg in result.curve:
            fh.write(f"{epoch}\t{loss:.6f}\t{recall:.6f}\t{ndcg:.6f}\n")
    with open(out / "group_sizes.tsv", "w", encoding="utf-8") as fh:
        for epoch, sizes in result.group_size_history:
            fh.write("\t".join([str(epoch)] + [str(s) for s in sizes]) + "\n")
    cfgmod.echo_config(cfg, out / "effective-config.txt")
    print(f"trained {len(result.curve)} epochs; best validation recall@20 "
          f"{result.best_recall:.5f} at epoch {result.best_epoch}; "
          f"checkpoint -> {out / 'checkpoint.impg'}")
    return 0


def _split_sets(pairs):
    out = {}
    for u, i in pairs:
        out.setdefault(int(u), set()).add(int(i))
    return out


def cmd_eval(cfg, provided) -> int:
    import numpy as np

    from .data import load_checkpoint
    from .evaluation import evaluate

    _require(cfg, "checkpoint", "data")
    split = _load_split(cfg)
    graph = _training_graph(split)
    state, meta = load_checkpoint(cfg["checkpoint"], graph)
    state.grouping.leaky_slope = cfg["leaky_slope"]
    k_layers = cfg["layers"] if "layers" in provided else meta["k_layers"]

    name = cfg["split"]
    if name == "test":
        target, excl = split.test, np.concatenate([split.train, split.validation])
    elif name == "validation":
        target, excl = split.validation, split.train
    elif name == "train":
        target, excl = split.train, np.empty((0, 2), dtype=np.int64)
    else:
        raise UsageError(f"unknown split {name!r}")
    if len(target) == 0:
        raise DataError(f"split {name!r} is empty")

    report = evaluate(state, graph, _split_sets(target), k_layers=k_layers,
                      cutoff=cfg["cutoff"], exclusions=_split_sets(excl),
                      ablate_structure=cfg["ablate_structure"],
                      ablate_first_order=cfg["ablate_first_order"],
                      subgraph_degrees=cfg["subgraph_degrees"],
                      per_group=cfg["per_group"])

    lines = [f"{metric}\t{cutoff}\t{value:.6f}" for metric, cutoff, value in report.rows()]
    if cfg["out"]:
        out = _out_dir(cfg)
        (out / "metrics.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        if report.per_group is not None:
            with open(out / "per_group.tsv", "w", encoding="utf-8") as fh:
                fh.write("group\trecall\tndcg\tusers\n")
                for s, (rec, ndcg, count) in sorted(report.per_group.items()):
                    fh.write(f"{s}\t{rec:.6f}\t{ndcg:.6f}\t{count}\n")
        cfgmod.echo_config(cfg, out / "effective-config.txt")
    for line in lines:
        print(line)
    return 0


def cmd_coverage(cfg, provided) -> int:
    import numpy as np

    from .graph import build_graph, mean_coverage_profile

    split = _load_split(cfg)
    pairs = split.train if cfg["train_only"] else split.all_pairs()
    graph = build_graph(pairs, num_users=split.num_users or None,
                        num_items=split.num_items or None)
    max_k = cfg["max_k"]
    if max_k < 0:
        raise UsageError("max-k must be >= 0")
    profile = mean_coverage_profile(graph, max_k, users_only=cfg["users_only"],
                                    seed=cfg["seed"])
    columns = {"mean": profile}
    if cfg["per_group"]:
        from .data import load_checkpoint
        from .grouping import build_partition

        _require(cfg, "checkpoint")
        state, _ = load_checkpoint(cfg["checkpoint"], graph)
        state.grouping.leaky_slope = cfg["leaky_slope"]
        partition = build_partition(graph, state)
        for s in range(partition.num_groups):
            members = np.flatnonzero(partition.group_of_user == s)
            if members.size:
                columns[f"group{s}"] = mean_coverage_profile(
                    graph, max_k, nodes=members, seed=cfg["seed"])

    ks = [0] if max_k == 0 else list(range(1, max_k + 1))
    lines = ["k\t" + "\t".join(columns)]
    for k in ks:
        lines.append(f"{k}\t" + "\t".join(f"{columns[c][k]:.6f}" for c in columns))
    text = "\n".join(lines) + "\n"
    if cfg["out"]:
        out = _out_dir(cfg)
        (out / "coverage.tsv").write_text(text, encoding="utf-8")
        cfgmod.echo_config(cfg, out / "effective-config.txt")
    print(text, end="")
    return 0


def cmd_groups(cfg, provided) -> int:
    from .data import load_checkpoint
    from .grouping import build_partition

    _require(cfg, "checkpoint", "data")
    split = _load_split(cfg)
    graph = _training_graph(split)
    state, meta = load_checkpoint(cfg["checkpoint"], graph)
    state.grouping.leaky_slope = cfg["leaky_slope"]
    partition = build_partition(graph, state, ablate_structure=cfg["ablate_structure"])

    names = {internal: ext for ext, internal in meta["user_map"].items()}
    lines = [f"{names.get(u, u)}\t{partition.group_of_user[u]}"
             for u in range(graph.num_users)]
    text = "\n".join(lines) + "\n"
    if cfg["out"]:
        out = _out_dir(cfg)
        (out / "groups.tsv").write_text(text, encoding="utf-8")
        cfgmod.echo_config(cfg, out / "effective-config.txt")
    else:
        print(text, end="")
    return 0


_COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval,
             "coverage": cmd_coverage, "groups": cmd_groups}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _pin_threads(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        cfg, provided = _resolve(args)
        return _COMMANDS[args.command](cfg, provided)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
