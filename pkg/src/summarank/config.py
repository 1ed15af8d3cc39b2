"""Run configuration: a single JSON file describing data paths, the metric
and method sets, feature extraction, model dimensions, and the training
schedule.  Unknown keys are rejected outright, and every run writes its
fully resolved configuration next to the outputs for provenance."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping

from .errors import ValidationError
from .features import FeatureConfig
from .metrics import NATIVE_METRICS, MetricRegistry
from .training import TrainConfig

__all__ = ["RunConfig", "load_run_config", "parse_run_config", "write_resolved_config"]

_SECTION_KEYS = {
    "data": {"train", "val", "test"},
    "methods": {"train", "test"},
    "features": {"mode", "ngram_orders", "length_cap", "source_cap", "path"},
    "model": {"bottom_sizes", "expert_sizes", "num_experts", "expert_dropout"},
    "training": {
        "epochs",
        "batch_size",
        "m_top",
        "m_bottom",
        "warmup_frac",
        "peak_lr",
        "label_scope",
    },
}
_TOP_KEYS = {"data", "metrics", "methods", "features", "model", "training", "seed", "out_dir"}

_MODEL_DEFAULTS = {
    "bottom_sizes": (64, 64),
    "expert_sizes": (64, 64),
    "num_experts": None,
    "expert_dropout": 0.5,
}
_TRAINING_DEFAULTS = {
    "epochs": 5,
    "batch_size": 32,
    "m_top": 1,
    "m_bottom": 1,
    "warmup_frac": 0.05,
    "peak_lr": 1e-3,
    "label_scope": "subset",
}


def _reject_unknown(mapping: Mapping, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ValidationError(
            f"unknown config keys in {where}: {unknown}; allowed: {sorted(allowed)}"
        )


def _section(raw: Mapping, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, Mapping):
        raise ValidationError(f"config section {name!r} must be an object")
    _reject_unknown(value, _SECTION_KEYS[name], name)
    return dict(value)


@dataclass(frozen=True)
class RunConfig:
    data: dict
    metrics: tuple[str, ...]
    train_methods: tuple[str, ...]
    test_methods: tuple[str, ...]
    feature_config: FeatureConfig
    feature_path: str | dict | None
    model: dict
    training: dict
    seed: int
    out_dir: str

    def registry(self) -> MetricRegistry:
        external = {
            name: "dataset-file" for name in self.metrics if name not in NATIVE_METRICS
        }
        return MetricRegistry(names=self.metrics, external_sources=external)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            train_methods=self.train_methods,
            metrics=self.metrics,
            seed=self.seed,
            bottom_sizes=tuple(self.model["bottom_sizes"]),
            expert_sizes=tuple(self.model["expert_sizes"]),
            num_experts=self.model["num_experts"],
            expert_dropout=self.model["expert_dropout"],
            **self.training,
        )

    def resolved(self) -> dict:
        """Canonical nested dict with every default filled in."""
        return {
            "data": dict(self.data),
            "metrics": list(self.metrics),
            "methods": {
                "train": list(self.train_methods),
                "test": list(self.test_methods),
            },
            "features": {
                "mode": self.feature_config.mode,
                "ngram_orders": list(self.feature_config.ngram_orders),
                "length_cap": self.feature_config.length_cap,
                "source_cap": self.feature_config.source_cap,
                "path": self.feature_path,
            },
            "model": {
                "bottom_sizes": list(self.model["bottom_sizes"]),
                "expert_sizes": list(self.model["expert_sizes"]),
                "num_experts": self.model["num_experts"],
                "expert_dropout": self.model["expert_dropout"],
            },
            "training": dict(self.training),
            "seed": self.seed,
            "out_dir": self.out_dir,
        }


def parse_run_config(raw: Mapping) -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ValidationError("run config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "the top level")

    data = _section(raw, "data")
    data = {key: data.get(key) for key in ("train", "val", "test")}
    for key, value in data.items():
        if value is not None and not isinstance(value, str):
            raise ValidationError(f"data.{key} must be a path string")

    metrics = tuple(raw.get("metrics", list(NATIVE_METRICS)))
    if not metrics or not all(isinstance(m, str) for m in metrics):
        raise ValidationError("metrics must be a nonempty list of names")

    methods = _section(raw, "methods")
    train_methods = tuple(methods.get("train", ()))
    if not train_methods:
        raise ValidationError("methods.train must list at least one decoding method")
    test_methods = tuple(methods.get("test", train_methods))
    extra = [m for m in test_methods if m not in train_methods]
    if extra:
        raise ValidationError(
            f"methods.test must be a subset of methods.train; extra: {extra}"
        )

    features = _section(raw, "features")
    feature_path = features.pop("path", None)
    if isinstance(feature_path, Mapping):
        _reject_unknown(feature_path, {"train", "val", "test"}, "features.path")
        if not all(isinstance(v, str) for v in feature_path.values()):
            raise ValidationError("features.path entries must be path strings")
        feature_path = dict(feature_path)
    elif feature_path is not None and not isinstance(feature_path, str):
        raise ValidationError(
            "features.path must be a path string or a per-split object"
        )
    if "ngram_orders" in features:
        features["ngram_orders"] = tuple(features["ngram_orders"])
    feature_config = FeatureConfig(**features)
    if feature_config.mode == "precomputed" and feature_path is None:
        raise ValidationError("precomputed feature mode requires features.path")

    model = {**_MODEL_DEFAULTS, **_section(raw, "model")}
    model["bottom_sizes"] = tuple(model["bottom_sizes"])
    model["expert_sizes"] = tuple(model["expert_sizes"])

    training = {**_TRAINING_DEFAULTS, **_section(raw, "training")}

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ValidationError("seed must be an integer")
    out_dir = raw.get("out_dir", ".")
    if not isinstance(out_dir, str):
        raise ValidationError("out_dir must be a path string")

    config = RunConfig(
        data=data,
        metrics=metrics,
        train_methods=train_methods,
        test_methods=test_methods,
        feature_config=feature_config,
        feature_path=feature_path,
        model=model,
        training=training,
        seed=seed,
        out_dir=out_dir,
    )
    config.train_config()  # surface invalid schedule/model values immediately
    return config


def load_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path}: invalid JSON ({exc.msg})") from exc
    return parse_run_config(raw)


def write_resolved_config(config: RunConfig, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved_config.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(config.resolved(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path
