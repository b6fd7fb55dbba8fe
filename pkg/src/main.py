#!/usr/bin/env python
"""
main.py (Command-Line Pipeline)
-------------------------------

Single entry point tying the pipeline together. Every subcommand reads the
same flat configuration (defaults < GAHNE_* environment < --config file <
command-line flags) and writes its artifacts into `--out`.

Subcommands:
    synth      generate a planted-partition heterogeneous graph (dataset files + manifest)
    stats      print dataset statistics
    train      train a model; writes checkpoint.json, history.csv, train.log, split.tsv
    eval       KNN classification + K-means clustering report (eval_report.csv)
    embed      export final embeddings (embeddings.tsv)
    gradcheck  finite-difference check of every parameter group and model variant
    ablate     train and evaluate the ablation variants (ablation.csv)
    sweep      parameter sensitivity over one key (sweep.csv)

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

Usage
-----
python src/main.py synth --out data/synth --seed 1
python src/main.py train --data-dir data/synth --out runs/atte
python src/main.py eval --data-dir data/synth --out runs/atte
python src/main.py train --config experiment.cfg --aggregator mean
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from autodiff.gradcheck import finite_diff_check
from core.config import RunConfig, load_run_config
from core.exceptions import ConfigError, GahneError, GraphDataError, NumericalError
from core.helper import derive_seed, format_row, make_rng
from core.logging_config import attach_file_handler, detach_handler, epoch_logger, logger
from data.data_loader import (
    GraphTensors,
    HeteroGraph,
    Split,
    build_features,
    load_graph,
    make_splits,
    parse_node_id,
    read_records,
    resolve_feature_mode,
    split_sizes,
    to_graph_tensors,
)
from data.synthetic import synth_from_config, tiny_hin, write_synthetic
from eda import describe_graph
from evaluate import run_classification_eval, run_clustering_eval, run_evaluation
from model.checkpoint import load_checkpoint, save_checkpoint
from model.gahne import ModelParams, embed, forward, init_params, parameter_group
from training.trainer import TrainHistory, TrainingDiverged, masked_cross_entropy, train

ABLATION_FRACTION = 0.4
GRADCHECK_AGGREGATORS = ("attention", "gated", "pooling", "mean", "single")


class UsageErrorParser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; this project reserves 2 for data errors."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- Dataset preparation ---


def prepare_dataset(config: RunConfig, need_labels: bool = True) -> tuple[HeteroGraph, GraphTensors, np.ndarray, Split | None]:
    """Loads the graph, builds features and operators, and draws the split."""
    paths = config.data_paths()
    if not need_labels and config.labels_path is None and paths["labels_path"] is not None and not paths["labels_path"].exists():
        paths["labels_path"] = None
    for key in ("nodes_path", "edges_path") + (("labels_path",) if need_labels else ()):
        if paths[key] is None:
            raise ConfigError(f"no {key.removesuffix('_path')} file given: set --data-dir or --{key.replace('_', '-')}")
    graph = load_graph(paths["nodes_path"], paths["edges_path"], paths["features_path"], paths["labels_path"])
    graph.check_heterogeneous()

    mode = resolve_feature_mode(graph, config.feature_mode, config.onehot_id_max_nodes)
    logger.info(f"Using '{mode}' input features.")
    graph_tensors = to_graph_tensors(graph, build_features(graph, mode))
    labels = graph.label_array()

    split = None
    if graph.labels:
        n_train, n_val = split_sizes(len(graph.labels), config.n_train, config.n_val, config.train_ratio, config.val_ratio)
        split = make_splits(graph, n_train, n_val, seed=derive_seed(config.seed, "split"))
    return graph, graph_tensors, labels, split


def write_split(path: Path, split: Split) -> None:
    rows = [(int(i), part) for part, ids in (("train", split.train_ids), ("val", split.val_ids), ("test", split.test_ids)) for i in ids]
    rows.sort()
    path.write_text("".join(f"{node_id}\t{part}\n" for node_id, part in rows), encoding="utf-8")


def read_split(path: Path, seed: int) -> Split:
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for line_number, fields in read_records(path, 2):
        if len(fields) != 2 or fields[1] not in parts:
            raise GraphDataError("expected <node_id>\\t<train|val|test>", path, line_number)
        parts[fields[1]].append(parse_node_id(fields[0], path, line_number))
    return Split(*(np.array(sorted(parts[p]), dtype=np.int64) for p in ("train", "val", "test")), seed=seed)


def _require_split(split: Split | None) -> Split:
    if split is None:
        raise GraphDataError("this command needs labeled nodes")
    return split


def _train_model(config: RunConfig, graph_tensors: GraphTensors, labels: np.ndarray, split: Split) -> tuple[ModelParams, TrainHistory]:
    return train(graph_tensors, labels, split, config.to_model_config(), config.to_train_config())


# --- Subcommands ---


def cmd_synth(config: RunConfig) -> dict[str, Path]:
    synth_config = config.to_synth_config()
    graph = synth_from_config(synth_config)
    return write_synthetic(graph, synth_config, config.out)


def cmd_stats(config: RunConfig) -> pd.DataFrame:
    graph, _, _, split = prepare_dataset(config, need_labels=False)
    stats = describe_graph(graph, split)
    config.out.mkdir(parents=True, exist_ok=True)
    stats.to_csv(config.out / "stats.csv", index=False, lineterminator="\n")
    return stats


def cmd_train(config: RunConfig) -> tuple[ModelParams, TrainHistory]:
    # --- 1. Load data ---
    graph, graph_tensors, labels, split = prepare_dataset(config)
    split = _require_split(split)
    config.out.mkdir(parents=True, exist_ok=True)
    write_split(config.out / "split.tsv", split)
    logger.info(f"Split: {len(split.train_ids)} train, {len(split.val_ids)} val, {len(split.test_ids)} test.")

    # --- 2. Train, mirroring the epoch lines into train.log ---
    handler = attach_file_handler(config.out / "train.log", target=epoch_logger, message_only=True)
    try:
        params, history = _train_model(config, graph_tensors, labels, split)
    except TrainingDiverged as e:
        e.history.to_csv(config.out / "history.csv")
        raise
    finally:
        detach_handler(handler, target=epoch_logger)

    # --- 3. Store artifacts ---
    save_checkpoint(config.out / "checkpoint.json", params, config.to_model_config())
    history.to_csv(config.out / "history.csv")
    best = history.best_record()
    logger.info(
        f"Training finished ({history.stop_reason}) after {len(history)} epochs; best epoch {best.epoch} "
        f"val_loss {best.val_loss:.6f} val_acc {best.val_acc:.4f}."
    )
    return params, history


def _load_trained(config: RunConfig, need_labels: bool) -> tuple[ModelParams, Any, GraphTensors, np.ndarray, Split | None]:
    checkpoint = config.checkpoint or config.out / "checkpoint.json"
    params, model_config = load_checkpoint(checkpoint)
    graph, graph_tensors, labels, split = prepare_dataset(config, need_labels=need_labels)
    split_file = checkpoint.parent / "split.tsv"
    if split is not None and split_file.exists():
        split = read_split(split_file, split.seed)
    if graph.labels and params.num_classes != graph.num_classes:
        raise GraphDataError(f"checkpoint predicts {params.num_classes} classes, data has {graph.num_classes}")
    # check_compatible inside forward reports input/relation mismatches
    return params, model_config, graph_tensors, labels, split


def cmd_eval(config: RunConfig) -> Path:
    params, model_config, graph_tensors, labels, split = _load_trained(config, need_labels=True)
    split = _require_split(split)
    embeddings = embed(graph_tensors, params, model_config)
    report = run_evaluation(
        embeddings,
        labels,
        split.test_ids,
        config.eval_fractions,
        config.repeats,
        config.seed,
        k=config.knn_k,
        max_iters=config.kmeans_max_iters,
        config=config.snapshot(),
    )
    path = config.out / "eval_report.csv"
    report.to_csv(path)
    print("\n--- Node Classification (KNN) ---")
    print(report.classification.to_string(index=False))
    print("\n--- Node Clustering (K-means) ---")
    print(report.clustering.to_string(index=False))
    logger.info(f"Successfully saved evaluation report to {path}.")
    return path


def cmd_embed(config: RunConfig) -> Path:
    params, model_config, graph_tensors, _, _ = _load_trained(config, need_labels=False)
    embeddings = embed(graph_tensors, params, model_config)
    path = config.out / "embeddings.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for node_id, row in enumerate(embeddings):
            handle.write(f"{node_id}\t{format_row(row)}\n")
    logger.info(f"Wrote {len(embeddings)} embeddings of dimension {embeddings.shape[1]} to {path}.")
    return path


def gradcheck_variants() -> list[tuple[str, dict[str, Any]]]:
    variants = []
    for aggregator in GRADCHECK_AGGREGATORS:
        for fusion in (True, False):
            for channels in (True, False):
                name = f"{aggregator}/fusion={'on' if fusion else 'off'}/channels={'on' if channels else 'off'}"
                variants.append((name, {"aggregator": aggregator, "fusion_enabled": fusion, "channels_enabled": channels}))
    return variants


def cmd_gradcheck(config: RunConfig) -> pd.DataFrame:
    """
    Finite-difference check on the fixed 8-node, 2-relation graph with
    d=4, d_q=3, m=2 for every aggregator x fusion x channel switch.
    Biases are drawn away from zero so that no ReLU input sits on its kink.
    """
    graph = tiny_hin()
    rng = make_rng(config.seed, "gradcheck", "instance")
    graph_tensors = to_graph_tensors(graph, rng.normal(size=(graph.num_nodes, 4)))
    labels = graph.label_array()
    labeled = graph.labeled_ids()

    rows = []
    for name, switches in tqdm(gradcheck_variants(), desc="Gradient check"):
        run = config.model_copy(
            update={"num_layers": 2, "hidden_dim": 4, "hidden_dims": None, "attention_dim": 3, "dropout": 0.0, **switches}
        )
        model_config = run.to_model_config()
        params = init_params(model_config, graph_tensors.num_channels, 4, graph.num_classes, derive_seed(config.seed, "gradcheck", name))
        for param_name, value in params.tensors.items():
            if param_name.endswith(".b"):
                params.tensors[param_name] = rng.uniform(-0.5, 0.5, size=value.shape)

        def build(tape, param_ids, model_config=model_config, params=params):
            output = forward(graph_tensors, params, model_config, tape=tape, param_ids=param_ids)
            return masked_cross_entropy(tape, output.prob_node, labels, labeled)

        result = finite_diff_check(build, params.tensors, eps=config.gradcheck_eps)
        groups: dict[str, float] = {}
        for param_name, error in result.errors.items():
            group = parameter_group(param_name)
            groups[group] = max(groups.get(group, 0.0), error)
        for group, error in groups.items():
            rows.append({"variant": name, "group": group, "max_rel_error": error, "passed": error <= config.gradcheck_tolerance})

    report = pd.DataFrame(rows, columns=["variant", "group", "max_rel_error", "passed"])
    for row in report.itertuples():
        print(f"{row.variant:<40} {row.group:<10} {row.max_rel_error:.3e} {'ok' if row.passed else 'FAIL'}")
    config.out.mkdir(parents=True, exist_ok=True)
    report.to_csv(config.out / "gradcheck.csv", index=False, float_format="%.6e", lineterminator="\n")
    if not report["passed"].all():
        failed = report.loc[~report["passed"]]
        raise NumericalError(f"gradient check failed for {len(failed)} parameter groups (worst {failed['max_rel_error'].max():.3e})")
    logger.info(f"Gradient check passed: max relative error {report['max_rel_error'].max():.3e}.")
    return report


def _train_and_score(config: RunConfig, graph_tensors: GraphTensors, labels: np.ndarray, split: Split) -> dict[str, float]:
    params, _ = _train_model(config, graph_tensors, labels, split)
    embeddings = embed(graph_tensors, params, config.to_model_config())
    classification = run_classification_eval(
        embeddings, labels, split.test_ids, [ABLATION_FRACTION], config.repeats, config.seed, config.knn_k
    )
    clustering = run_clustering_eval(embeddings, labels, config.repeats, config.seed, config.kmeans_max_iters)
    scores = {row.metric: row.mean for row in classification.itertuples()}
    scores.update({row.metric: row.mean for row in clustering.itertuples()})
    return scores


def cmd_ablate(config: RunConfig) -> pd.DataFrame:
    """Full model against the mean-aggregator, no-fusion, whole-graph-only and single-channel variants."""
    graph, graph_tensors, labels, split = prepare_dataset(config)
    split = _require_split(split)
    variants: list[tuple[str, dict[str, Any]]] = [
        ("full", {}),
        ("w/dag", {"aggregator": "mean"}),
        ("w/dfu", {"fusion_enabled": False}),
        ("tra", {"channels_enabled": False}),
    ]
    variants += [(f"sig({graph.edge_type_names[t]})", {"aggregator": "single", "single_channel": t}) for t in range(graph.num_edge_types)]

    rows = []
    for name, update in tqdm(variants, desc="Ablation variants"):
        scores = _train_and_score(config.model_copy(update=update), graph_tensors, labels, split)
        rows.append({"variant": name, **scores})
    # "sig" reports the best single channel by Micro-F1
    best_single = max((row for row in rows if row["variant"].startswith("sig(")), key=lambda row: row["micro_f1"])
    rows.append({**best_single, "variant": "sig"})
    table = pd.DataFrame(rows, columns=["variant", "macro_f1", "micro_f1", "nmi", "ari"])

    config.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(config.out / "ablation.csv", index=False, float_format="%.10g", lineterminator="\n")
    print(table.to_string(index=False))
    return table


def cmd_sweep(config: RunConfig) -> pd.DataFrame:
    """Retrains once per value of `sweep_param` and reports clustering quality."""
    _, graph_tensors, labels, split = prepare_dataset(config)
    split = _require_split(split)
    rows = []
    for value in tqdm(config.sweep_values, desc=f"Sweep {config.sweep_param}"):
        update: dict[str, Any] = {config.sweep_param: value}
        if config.sweep_param in ("hidden_dim", "num_layers"):
            update["hidden_dims"] = None
        run = config.model_copy(update=update)
        params, _ = _train_model(run, graph_tensors, labels, split)
        clustering = run_clustering_eval(embed(graph_tensors, params, run.to_model_config()), labels, run.repeats, run.seed, run.kmeans_max_iters)
        for row in clustering.itertuples():
            rows.append({"param": config.sweep_param, "value": value, "metric": row.metric, "mean": row.mean, "sd": row.sd})
    table = pd.DataFrame(rows, columns=["param", "value", "metric", "mean", "sd"])
    config.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(config.out / "sweep.csv", index=False, float_format="%.10g", lineterminator="\n")
    print(table.to_string(index=False))
    return table


COMMANDS: dict[str, tuple[Callable[[RunConfig], Any], str]] = {
    "synth": (cmd_synth, "Generate a synthetic heterogeneous graph."),
    "stats": (cmd_stats, "Print dataset statistics."),
    "train": (cmd_train, "Train a model and write its checkpoint and history."),
    "eval": (cmd_eval, "Evaluate embeddings with KNN classification and K-means clustering."),
    "embed": (cmd_embed, "Export the final node embeddings."),
    "gradcheck": (cmd_gradcheck, "Verify gradients with central finite differences."),
    "ablate": (cmd_ablate, "Train and evaluate the ablation variants."),
    "sweep": (cmd_sweep, "Parameter sensitivity over one configuration key."),
}


def build_parser() -> argparse.ArgumentParser:
    parser = UsageErrorParser(description="Heterogeneous network embedding with aggregated graph convolutions.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=UsageErrorParser)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", type=Path, default=None, help="flat key=value config file")
        for field_name, info in RunConfig.model_fields.items():
            default = info.default
            if isinstance(default, list):
                default = ",".join(str(v) for v in default)
            sub.add_argument(
                f"--{field_name.replace('_', '-')}",
                dest=field_name,
                default=None,
                metavar="VALUE",
                help=f"{info.description} (default: {default})",
            )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {key: value for key, value in vars(args).items() if key not in ("command", "config") and value is not None}
    try:
        config = load_run_config(args.config, overrides)
        logger.info(f"Running '{args.command}' with seed {config.seed}, output to {config.out}.")
        COMMANDS[args.command][0](config)
    except GahneError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"{args.command} failed: {e}")
        return ConfigError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
