"""The full training protocol: pair sampling, the epoch loop, validation
checkpointing, and the half-split data workflow."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .candidates import Dataset, merge_pools, sample_training_candidates, score_of
from .errors import NumericError, ValidationError
from .evaluation import rerank
from .features import features_matrix
from .metrics import NATIVE_METRICS, MetricRegistry
from .model import (
    ModelConfig,
    RerankerModel,
    backward,
    init_model,
    init_optimizer,
    optimizer_step,
    sample_expert_mask,
)

__all__ = [
    "TrainConfig",
    "TrainingPair",
    "Checkpoint",
    "TrainResult",
    "HalfSplitArtifacts",
    "build_training_pairs",
    "train",
    "run_half_split_protocol",
    "train_config_hash",
]


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs besides the data itself.

    ``train_methods`` is the decoding-method set candidates may come from;
    ``metrics`` fixes the task order.  ``label_scope`` controls whether the
    per-metric best labels are computed within the sampled candidate subset
    (default) or against the full merged pool.
    """

    train_methods: tuple[str, ...]
    metrics: tuple[str, ...] = NATIVE_METRICS
    epochs: int = 5
    batch_size: int = 32
    m_top: int = 1
    m_bottom: int = 1
    warmup_frac: float = 0.05
    peak_lr: float = 1e-3
    seed: int = 0
    label_scope: str = "subset"
    bottom_sizes: tuple[int, int] = (64, 64)
    expert_sizes: tuple[int, int] = (64, 64)
    num_experts: int | None = None
    expert_dropout: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_methods", tuple(self.train_methods))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "bottom_sizes", tuple(self.bottom_sizes))
        object.__setattr__(self, "expert_sizes", tuple(self.expert_sizes))
        if not self.train_methods:
            raise ValidationError("train_methods must be nonempty")
        if not self.metrics:
            raise ValidationError("metrics must be nonempty")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.label_scope not in ("subset", "pool"):
            raise ValidationError(
                f"label_scope must be 'subset' or 'pool', got {self.label_scope!r}"
            )


def train_config_hash(config: TrainConfig) -> str:
    """Stable digest of the configuration, for provenance manifests."""
    payload = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class TrainingPair:
    """One example's sampled candidate subset as training rows."""

    example_id: str
    features: np.ndarray  # (subset size, feature dim)
    labels: np.ndarray  # (subset size, num metrics)


def _sampling_registry(dataset: Dataset, metrics: tuple[str, ...]) -> MetricRegistry:
    if dataset.registry.names == metrics:
        return dataset.registry
    external = {n: "dataset-file" for n in metrics if n not in NATIVE_METRICS}
    return MetricRegistry(names=metrics, external_sources=external)


def build_training_pairs(
    dataset: Dataset,
    config: TrainConfig,
    epoch: int = 0,
) -> list[TrainingPair]:
    """Sample each example's training candidates and label them per metric.

    The subset per example is deterministic (ranking by summed normalized
    scores), so pair CONTENTS never change across epochs; only the stream
    ORDER is reshuffled, under a seed derived from (config.seed, epoch).
    """
    registry = _sampling_registry(dataset, config.metrics)
    pairs: list[TrainingPair] = []
    for example in dataset:
        pool = merge_pools(example, config.train_methods)
        subset = sample_training_candidates(
            pool, config.m_top, config.m_bottom, registry
        )
        assert all(c.method in config.train_methods for c in subset)
        scope = subset if config.label_scope == "subset" else pool
        labels = np.zeros((len(subset), len(config.metrics)))
        for k, metric in enumerate(config.metrics):
            best = max(score_of(c, metric) for c in scope)
            for i, candidate in enumerate(subset):
                labels[i, k] = 1.0 if score_of(candidate, metric) == best else 0.0
        pairs.append(
            TrainingPair(
                example_id=example.id,
                features=features_matrix(subset),
                labels=labels,
            )
        )
    order = np.random.default_rng((config.seed, 0, epoch)).permutation(len(pairs))
    return [pairs[int(i)] for i in order]


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Model snapshot at an epoch boundary, with its validation score
    (sum over metrics of the mean raw metric value of the selections)."""

    model: RerankerModel
    epoch: int
    validation_score: float


@dataclass(frozen=True, eq=False)
class TrainResult:
    checkpoints: tuple[Checkpoint, ...]
    best: Checkpoint


def _validation_score(
    model: RerankerModel, dataset_val: Dataset, config: TrainConfig
) -> float:
    total = 0.0
    for example in dataset_val:
        outcome = rerank(model, example, config.train_methods)
        total += sum(outcome.selected_scores[m] for m in config.metrics)
    score = total / len(dataset_val)
    if not math.isfinite(score):
        raise NumericError(f"validation score is not finite: {score}")
    return score


def _feature_dim(pairs: Sequence[TrainingPair]) -> int:
    dims = {pair.features.shape[1] for pair in pairs}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent feature dimensions: {sorted(dims)}")
    return dims.pop()


def train(
    dataset_train: Dataset,
    dataset_val: Dataset,
    config: TrainConfig,
) -> TrainResult:
    """Run the epoch loop and return every checkpoint plus the best one.

    Each step samples one expert mask per example (shared by that example's
    candidate rows), backpropagates the multi-task loss, and applies one
    optimizer update.  After every epoch the model is checkpointed with its
    validation selection score; the checkpoint maximizing that score wins,
    ties going to the earliest epoch.  With ``epochs=0`` the initial model
    is the only checkpoint.
    """
    if len(dataset_train) == 0:
        raise ValidationError("training dataset is empty")
    if len(dataset_val) == 0:
        raise ValidationError("validation dataset is empty")

    probe = build_training_pairs(dataset_train, config, epoch=0)
    dim = _feature_dim(probe)
    model_config = ModelConfig(
        input_dim=dim,
        num_tasks=len(config.metrics),
        bottom_sizes=config.bottom_sizes,
        expert_sizes=config.expert_sizes,
        num_experts=config.num_experts,
        expert_dropout=config.expert_dropout,
        seed=config.seed,
    )
    model = init_model(
        model_config,
        metric_names=config.metrics,
        train_methods=config.train_methods,
    )

    if config.epochs == 0:
        checkpoint = Checkpoint(
            model=model.copy(),
            epoch=0,
            validation_score=_validation_score(model, dataset_val, config),
        )
        return TrainResult(checkpoints=(checkpoint,), best=checkpoint)

    steps_per_epoch = math.ceil(len(dataset_train) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    optimizer = init_optimizer(
        model, config.peak_lr, total_steps, warmup_frac=config.warmup_frac
    )
    mask_rng = np.random.default_rng((config.seed, 1))

    checkpoints: list[Checkpoint] = []
    for epoch in range(1, config.epochs + 1):
        pairs = build_training_pairs(dataset_train, config, epoch=epoch)
        for start in range(0, len(pairs), config.batch_size):
            batch = pairs[start : start + config.batch_size]
            rows = []
            labels = []
            masks = []
            for pair in batch:
                mask = sample_expert_mask(
                    model_config.num_experts, model_config.expert_dropout, mask_rng
                )
                rows.append(pair.features)
                labels.append(pair.labels)
                masks.append(np.tile(mask, (pair.features.shape[0], 1)))
            X = np.vstack(rows)
            Y = np.vstack(labels)
            M = np.vstack(masks)
            grads, _ = backward(model, X, Y, M)
            model, optimizer = optimizer_step(model, grads, optimizer)
        checkpoints.append(
            Checkpoint(
                model=model.copy(),
                epoch=epoch,
                validation_score=_validation_score(model, dataset_val, config),
            )
        )
    best = min(checkpoints, key=lambda c: (-c.validation_score, c.epoch))
    return TrainResult(checkpoints=tuple(checkpoints), best=best)


@dataclass(frozen=True, eq=False)
class HalfSplitArtifacts:
    manifest: dict
    result: TrainResult


def run_half_split_protocol(
    half_a: Dataset,
    half_b: Dataset,
    dataset_val: Dataset,
    dataset_test: Dataset,
    config: TrainConfig,
    provenance: Mapping[str, Mapping[str, str]],
) -> HalfSplitArtifacts:
    """Merge cross-inferred candidate halves and train the re-ranker on them.

    Each half's candidates must have been produced by a base model trained
    on the OTHER half; that pairing happens outside this tool, so here it is
    validated and documented rather than executed.  ``provenance`` must
    carry a free-text ``generator`` entry for both halves.  Overlapping
    example ids between the halves mean leakage and are refused.
    """
    ids_a = [e.id for e in half_a]
    ids_b = [e.id for e in half_b]
    overlap = sorted(set(ids_a) & set(ids_b))
    if overlap:
        raise ValidationError(
            f"example ids appear in both halves (leakage): {overlap[:5]}"
        )
    for key in ("half_a", "half_b"):
        entry = provenance.get(key)
        if not entry or not entry.get("generator"):
            raise ValidationError(
                f"provenance for {key!r} must include a 'generator' field"
            )
    if half_a.registry.names != half_b.registry.names:
        raise ValidationError(
            "halves disagree on the metric set: "
            f"{half_a.registry.names} vs {half_b.registry.names}"
        )
    methods = half_a.methods + tuple(
        m for m in half_b.methods if m not in half_a.methods
    )
    merged = replace(
        half_a, examples=half_a.examples + half_b.examples, methods=methods
    )
    result = train(merged, dataset_val, config)
    manifest = {
        "split_seed": config.seed,
        "half_a_ids": ids_a,
        "half_b_ids": ids_b,
        "val_ids": [e.id for e in dataset_val],
        "test_ids": [e.id for e in dataset_test],
        "provenance": {
            "half_a": {"generator": provenance["half_a"]["generator"]},
            "half_b": {"generator": provenance["half_b"]["generator"]},
        },
        "config_hash": train_config_hash(config),
    }
    return HalfSplitArtifacts(manifest=manifest, result=result)
