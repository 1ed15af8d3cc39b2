"""Command-line entry point.

Subcommands cover the full workflow: ``score`` fills native metric values,
``stats`` profiles a scored dataset, ``split`` partitions examples in half,
``train`` fits the re-ranker from a run config, ``rerank`` writes selections
for a test set, and ``eval`` turns selections into the report bundle.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 numeric
failure.  Identical inputs, config, and seed produce byte-identical output
files; no report embeds a timestamp.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import evaluation, reports
from .candidates import Dataset, half_split, load_dataset, merge_pools, save_dataset
from .candidates import identical_pool_fraction, unique_score_count, score_of
from .config import RunConfig, load_run_config, write_resolved_config
from .errors import NumericError, SummarankError, ValidationError
from .features import (
    FeatureConfig,
    features_matrix,
    featurize_dataset,
    load_precomputed,
)
from .metrics import (
    NATIVE_METRICS,
    MetricRegistry,
    UndefinedCorrelationError,
    best_baselines,
    default_registry,
    mean_relative_gain,
)
from .model import forward_batch, load_model, save_model
from .training import train, train_config_hash

__all__ = ["main"]


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _registry_for_metrics(metrics: tuple[str, ...]) -> MetricRegistry:
    external = {m: "dataset-file" for m in metrics if m not in NATIVE_METRICS}
    return MetricRegistry(names=metrics, external_sources=external)


def _discover_methods(path) -> tuple[str, ...]:
    """Collect candidate method tags from a dataset file, in first-seen
    order, for commands that take no explicit method set."""
    seen: list[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                continue  # the real loader reports a precise error
            for candidate in record.get("candidates", []):
                method = candidate.get("method") if isinstance(candidate, dict) else None
                if isinstance(method, str) and method not in seen:
                    seen.append(method)
    return tuple(seen)


def _featurize(dataset: Dataset, config: RunConfig, split: str) -> Dataset:
    fc = config.feature_config
    if fc.mode == "lexical":
        return featurize_dataset(dataset, fc)
    path = config.feature_path
    if isinstance(path, dict):
        path = path.get(split)
        if path is None:
            raise ValidationError(f"features.path has no entry for split {split!r}")
    store = load_precomputed(path, dataset)
    return featurize_dataset(store.attach(dataset), fc)


def _feature_settings(args) -> RunConfig | None:
    return load_run_config(args.config) if getattr(args, "config", None) else None


def _default_feature_config() -> FeatureConfig:
    return FeatureConfig()


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def cmd_score(args) -> int:
    metrics = tuple(args.metrics) if args.metrics else NATIVE_METRICS
    unknown = [m for m in metrics if m not in NATIVE_METRICS]
    if unknown:
        raise ValidationError(
            f"cannot compute scores for {unknown}; registered native metrics "
            f"are {list(NATIVE_METRICS)}"
        )
    methods = tuple(args.methods) if args.methods else _discover_methods(args.data)
    dataset = load_dataset(
        args.data, default_registry(metrics), methods, strict=args.strict
    )
    save_dataset(dataset, args.out)
    _log(f"scored {len(dataset)} examples -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    metrics = tuple(args.metrics) if args.metrics else NATIVE_METRICS
    methods = tuple(args.methods) if args.methods else _discover_methods(args.data)
    registry = _registry_for_metrics(metrics)
    dataset = load_dataset(args.data, registry, methods, strict=args.strict)
    if len(dataset) == 0:
        raise ValidationError(f"{args.data} holds no examples")
    writer = reports.ReportWriter(args.out_dir)

    oracle_table = []
    for method in methods:
        try:
            oracle = evaluation.oracle_scores(dataset, metrics, (method,))
        except SummarankError:
            continue  # method absent from every example
        row = {"methods": method}
        row.update({m: reports.format_score(oracle[m]) for m in metrics})
        oracle_table.append(row)
    merged = evaluation.oracle_scores(dataset, metrics, methods)
    row = {"methods": "+".join(methods)}
    row.update({m: reports.format_score(merged[m]) for m in metrics})
    oracle_table.append(row)
    writer.emit("oracle", "Oracle scores (per-example pool maxima, x100)", oracle_table)

    unique_rows = []
    identical_rows = []
    for method in methods:
        covered = [
            [c for c in example.candidates if c.method == method]
            for example in dataset
        ]
        covered = [pool for pool in covered if pool]
        if not covered:
            continue
        for metric in metrics:
            uniques = [unique_score_count(pool, metric) for pool in covered]
            unique_rows.append(
                {
                    "method": method,
                    "metric": metric,
                    "mean_unique": f"{np.mean(uniques):.2f}",
                    "mean_pool": f"{np.mean([len(p) for p in covered]):.2f}",
                }
            )
            identical_rows.append(
                {
                    "method": method,
                    "metric": metric,
                    "identical_pct": reports.format_score(
                        identical_pool_fraction(dataset, metric, method)
                    ),
                }
            )
    writer.emit("unique_scores", "Distinct metric scores per pool", unique_rows)
    writer.emit(
        "identical_fraction", "Share of fully tied pools (x100)", identical_rows
    )

    try:
        matrix = evaluation.metric_correlation_report(
            dataset, metrics, method=args.correlation_method
        )
    except UndefinedCorrelationError as exc:
        writer.notice(
            "correlation",
            "Pearson correlation between metrics",
            f"correlation undefined: {exc}",
        )
    else:
        writer.emit(
            "correlation",
            "Pearson correlation between metrics (candidate level)",
            reports.correlation_rows(matrix, metrics),
        )
    _log(f"stats written to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def cmd_split(args) -> int:
    methods = tuple(args.methods) if args.methods else _discover_methods(args.data)
    metrics = tuple(args.metrics) if args.metrics else NATIVE_METRICS
    dataset = load_dataset(
        args.data, _registry_for_metrics(metrics), methods, strict=args.strict
    )
    half_a, half_b = half_split(dataset, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    path_a = os.path.join(args.out_dir, "half_a.jsonl")
    path_b = os.path.join(args.out_dir, "half_b.jsonl")
    save_dataset(half_a, path_a)
    save_dataset(half_b, path_b)
    manifest = {
        "seed": args.seed,
        "half_a_ids": [e.id for e in half_a],
        "half_b_ids": [e.id for e in half_b],
    }
    with open(os.path.join(args.out_dir, "split_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"split {len(dataset)} examples into {len(half_a)} + {len(half_b)}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    if not args.config:
        raise ValidationError("train requires --config")
    config = load_run_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.out_dir != ".":
        config = dataclasses.replace(config, out_dir=args.out_dir)

    train_path = config.data.get("train")
    val_path = config.data.get("val")
    if not train_path or not val_path:
        raise ValidationError("config must set data.train and data.val for training")
    registry = config.registry()
    load_methods = config.train_methods + tuple(
        m for m in config.test_methods if m not in config.train_methods
    )
    dataset_train = load_dataset(train_path, registry, load_methods, strict=args.strict)
    dataset_val = load_dataset(val_path, registry, load_methods, strict=args.strict)
    dataset_train = _featurize(dataset_train, config, "train")
    dataset_val = _featurize(dataset_val, config, "val")

    train_config = config.train_config()
    result = train(dataset_train, dataset_val, train_config)

    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, "model.bin")
    save_model(result.best.model, model_path)
    manifest = {
        "config_hash": train_config_hash(train_config),
        "epochs": train_config.epochs,
        "selected_epoch": result.best.epoch,
        "validation_scores": [c.validation_score for c in result.checkpoints],
        "metrics": list(train_config.metrics),
        "train_methods": list(train_config.train_methods),
        "feature_dim": result.best.model.config.input_dim,
    }
    with open(os.path.join(out_dir, "train_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_resolved_config(config, out_dir)
    _log(
        f"trained {train_config.epochs} epochs; kept epoch {result.best.epoch} "
        f"(validation score {result.best.validation_score:.4f}) -> {model_path}"
    )
    return 0


# ---------------------------------------------------------------------------
# rerank
# ---------------------------------------------------------------------------


def _model_input_dataset(args, dataset: Dataset, model) -> Dataset:
    """Dataset with features the model can consume: file-carried vectors of
    the right width pass through, otherwise features are derived per the
    run config (default lexical)."""
    dims = {
        len(c.features)
        for example in dataset
        for c in example.candidates
        if c.features is not None
    }
    missing = any(
        c.features is None for example in dataset for c in example.candidates
    )
    if not missing and dims == {model.config.input_dim}:
        return dataset
    run_config = _feature_settings(args)
    if run_config is not None:
        return _featurize(dataset, run_config, "test")
    return featurize_dataset(dataset, _default_feature_config())


def _load_for_model(args, model):
    registry = _registry_for_metrics(model.metric_names)
    dataset = load_dataset(
        args.data, registry, model.train_methods, strict=args.strict
    )
    return _model_input_dataset(args, dataset, model)


def cmd_rerank(args) -> int:
    model = load_model(args.model)
    dataset = _load_for_model(args, model)
    methods = tuple(args.methods) if args.methods else model.train_methods

    workers = args.workers or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(lambda e: evaluation.rerank(model, e, methods), dataset)
            )
    else:
        outcomes = [evaluation.rerank(model, e, methods) for e in dataset]

    with open(args.out, "w", encoding="utf-8") as fh:
        header = {
            "record": "header",
            "methods": list(methods),
            "metrics": list(model.metric_names),
            "num_examples": len(dataset),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for example, outcome in zip(dataset, outcomes):
            pool = merge_pools(example, methods)
            # pool-mean gate weights ride along so an eval run can report
            # expert utilization from this file alone
            gates = forward_batch(model, features_matrix(pool)).gates
            record = {
                "record": "selection",
                "id": outcome.example_id,
                "selected_index": outcome.selected_index,
                "selected_text": pool[outcome.selected_index].text,
                "order": list(outcome.order),
                "prob_sums": list(outcome.prob_sums),
                "pool_size": len(pool),
                "gate_means": gates.mean(axis=0).tolist(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _log(f"reranked {len(dataset)} examples -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _read_selections(path) -> tuple[dict, list[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValidationError(f"{path} is empty; expected a selections header")
    header = json.loads(lines[0])
    if header.get("record") != "header":
        raise ValidationError(f"{path} does not start with a selections header")
    records = [json.loads(line) for line in lines[1:]]
    if any(r.get("record") != "selection" for r in records):
        raise ValidationError(f"{path} contains non-selection records")
    if header.get("num_examples") != len(records):
        raise ValidationError(
            f"{path} header announces {header.get('num_examples')} examples "
            f"but carries {len(records)}"
        )
    return header, records


def _outcomes_from_selections(
    header: dict, records: list[dict], dataset: Dataset
) -> list[evaluation.RankingOutcome]:
    if len(records) != len(dataset):
        raise ValidationError(
            f"selections cover {len(records)} examples, dataset has {len(dataset)}"
        )
    methods = tuple(header["methods"])
    metrics = tuple(header["metrics"])
    outcomes = []
    for record, example in zip(records, dataset):
        if record["id"] != example.id:
            raise ValidationError(
                f"selections misaligned: {record['id']!r} vs {example.id!r}"
            )
        order = tuple(int(i) for i in record["order"])
        if record["selected_index"] != order[0]:
            raise ValidationError(
                f"corrupt selection for {example.id!r}: selected_index is not "
                "the first ranked candidate"
            )
        pool = merge_pools(example, methods)
        if sorted(order) != list(range(len(pool))):
            raise ValidationError(
                f"selection order for {example.id!r} is not a permutation of "
                f"its {len(pool)}-candidate pool"
            )
        outcomes.append(
            evaluation.RankingOutcome(
                example_id=example.id,
                methods=methods,
                order=order,
                selected_index=order[0],
                selected_scores={m: score_of(pool[order[0]], m) for m in metrics},
                prob_sums=tuple(float(v) for v in record["prob_sums"]),
                # per-candidate gates are not recorded; utilization comes from
                # the pool-mean gate_means fields instead
                gate_weights=np.zeros((len(metrics), 1)),
                pool_size=len(pool),
            )
        )
    return outcomes


def cmd_eval(args) -> int:
    header, records = _read_selections(args.selections)
    methods = tuple(header["methods"])
    metrics = tuple(header["metrics"])
    model = load_model(args.model) if args.model else None
    if model is not None and model.metric_names != metrics:
        raise ValidationError(
            f"model metrics {list(model.metric_names)} differ from the "
            f"selections header {list(metrics)}"
        )
    registry = _registry_for_metrics(metrics)
    load_methods = args.methods or _discover_methods(args.data)
    dataset = load_dataset(args.data, registry, load_methods, strict=args.strict)
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate an empty dataset")
    outcomes = _outcomes_from_selections(header, records, dataset)
    writer = reports.ReportWriter(args.out_dir)
    alpha = args.alpha

    system_scores = {
        m: [o.selected_scores[m] for o in outcomes] for m in metrics
    }
    system_means = {m: float(np.mean(system_scores[m])) for m in metrics}
    writer.emit(
        "metric_table",
        "Mean metric values of the selected candidates (x100)",
        reports.metric_table_rows(system_means),
    )

    baseline_methods = tuple(args.baselines) if args.baselines is not None else methods
    baseline_scores: dict[str, dict[str, list[float]]] = {}
    baseline_texts: dict[str, list[str]] = {}
    for method in baseline_methods:
        per_metric: dict[str, list[float]] = {m: [] for m in metrics}
        texts: list[str] = []
        for example in dataset:
            top = next((c for c in example.candidates if c.method == method), None)
            if top is None:
                raise ValidationError(
                    f"example {example.id!r} has no candidates for baseline "
                    f"method {method!r}"
                )
            for m in metrics:
                per_metric[m].append(score_of(top, m))
            texts.append(top.text)
        baseline_scores[method] = per_metric
        baseline_texts[method] = texts

    if baseline_scores:
        per_method_means = {
            method: {m: float(np.mean(vals[m])) for m in metrics}
            for method, vals in baseline_scores.items()
        }
        best = best_baselines(per_method_means)
        try:
            gain = mean_relative_gain(system_means, best)
            writer.emit(
                "gain",
                "Mean relative gain over the best baselines (percent)",
                reports.gain_rows(system_means, best, gain),
            )
        except ValueError as exc:
            writer.notice("gain", "Mean relative gain", f"gain undefined: {exc}")
        significance = evaluation.significance_report(
            system_scores, baseline_scores, alpha=alpha
        )
        writer.emit(
            "significance",
            f"Paired t-tests against every baseline (alpha={alpha})",
            reports.significance_rows(significance, alpha),
        )
    else:
        notice = "no baseline methods supplied; section omitted"
        writer.notice("gain", "Mean relative gain", notice)
        writer.notice("significance", "Paired t-tests", notice)

    curve = evaluation.recall_at_k(outcomes, dataset)
    writer.emit("recall", "Best-candidate recall at k (x100)", reports.recall_rows(curve))

    overlap = evaluation.overlap_stats(
        outcomes, dataset, base_method=args.base_method
    )
    writer.emit(
        "overlap",
        "Selection overlap with base and best candidates (x100)",
        reports.overlap_rows(overlap),
    )

    sources = [e.source for e in dataset]
    novelty = {
        "system": evaluation.novelty_report(
            [
                merge_pools(e, methods)[o.selected_index].text
                for e, o in zip(dataset, outcomes)
            ],
            sources,
        ),
        "reference": evaluation.novelty_report([e.reference for e in dataset], sources),
    }
    for method, texts in baseline_texts.items():
        novelty[f"base_{method}"] = evaluation.novelty_report(texts, sources)
    writer.emit(
        "novelty",
        "Mean novel n-gram share vs the source (x100)",
        reports.novelty_rows(novelty),
    )

    gate_payloads = [record.get("gate_means") for record in records]
    if all(payload is not None for payload in gate_payloads):
        try:
            stacked = np.array(
                [np.asarray(p, dtype=np.float64) for p in gate_payloads]
            )
        except ValueError as exc:
            raise ValidationError(f"inconsistent gate_means shapes: {exc}") from exc
        if stacked.ndim != 3 or stacked.shape[1] != len(metrics):
            raise ValidationError(
                "gate_means entries must be (task, expert) grids with one "
                "row per header metric"
            )
        pool_sizes = np.array(
            [record.get("pool_size", len(record["order"])) for record in records],
            dtype=np.float64,
        )
        utilization = (
            pool_sizes[:, None, None] * stacked
        ).sum(axis=0) / pool_sizes.sum()
        writer.emit(
            "utilization",
            "Mean gate weight per task and expert",
            reports.utilization_rows(utilization, metrics),
        )
    elif model is not None:
        utilization = evaluation.expert_utilization(
            model, _model_input_dataset(args, dataset, model), methods
        )
        writer.emit(
            "utilization",
            "Mean gate weight per task and expert",
            reports.utilization_rows(utilization, metrics),
        )
    else:
        writer.notice(
            "utilization",
            "Expert utilization",
            "selections carry no gate weights and no --model was given; "
            "section skipped",
        )

    if model is not None:
        featurized = _model_input_dataset(args, dataset, model)
        min_pool = min(o.pool_size for o in outcomes)
        ks = (
            tuple(args.subsample_ks)
            if args.subsample_ks
            else tuple(range(1, min_pool + 1))
        )
        subsample = evaluation.subsample_curve(
            model,
            featurized,
            ks=ks,
            trials=args.subsample_trials,
            seed=args.seed if args.seed is not None else 0,
            methods=methods,
        )
        writer.emit(
            "subsample",
            "Mean selected score when reranking random k-subsets (x100)",
            reports.subsample_rows(subsample),
        )
    else:
        writer.notice(
            "subsample",
            "Subsample curve",
            "requires --model for inference on candidate subsets; "
            "section skipped",
        )
    _log(f"evaluation bundle written to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration JSON file")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers")
    parser.add_argument("--out-dir", default=".", help="report/output directory")
    parser.add_argument(
        "--strict", action="store_true", help="reject unknown dataset fields"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="summarank",
        description="Second-stage summary candidate re-ranking toolkit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("score", help="fill native metric scores")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", nargs="*", default=None)
    p.add_argument("--methods", nargs="*", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", help="profile a scored dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", nargs="*", default=None)
    p.add_argument("--methods", nargs="*", default=None)
    p.add_argument("--correlation-method", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="random half-split of a dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", nargs="*", default=None)
    p.add_argument("--methods", nargs="*", default=None)
    p.set_defaults(func=cmd_split, seed_required=True)

    p = sub.add_parser("train", help="train the re-ranker from a run config")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="write selections for a dataset")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", nargs="*", default=None)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="full report bundle from selections")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--selections", required=True)
    p.add_argument("--model", default=None,
                   help="model file; enables the subsample curve")
    p.add_argument("--methods", nargs="*", default=None)
    p.add_argument("--baselines", nargs="*", default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--base-method", default=None)
    p.add_argument("--subsample-ks", nargs="*", type=int, default=None)
    p.add_argument("--subsample-trials", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help(file=sys.stderr)
        return 1
    if getattr(args, "seed_required", False) and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except NumericError as exc:
        _log(f"numeric failure: {exc}")
        return 3
    except SummarankError as exc:
        _log(f"validation failure: {exc}")
        return 1
    except OSError as exc:
        _log(f"i/o failure: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
