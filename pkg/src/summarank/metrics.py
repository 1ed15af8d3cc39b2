"""Candidate quality scores: native ROUGE, score normalization, correlation,
relative gain, and the registry tying metric names to score sources.

All native scores live on the [0, 1] scale internally; reports multiply by
100 at the formatting boundary only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .textproc import ROUGE_TOKENIZER, TokenizerConfig, ngrams, tokenize

__all__ = [
    "ScoreTriple",
    "MetricRegistry",
    "DuplicateMetricError",
    "UndefinedCorrelationError",
    "NATIVE_METRICS",
    "rouge_n",
    "rouge_l",
    "native_scores",
    "normalize_pool_scores",
    "pearson",
    "mean_relative_gain",
    "best_baselines",
    "register_external_metric",
    "default_registry",
]

NATIVE_METRICS = ("rouge1", "rouge2", "rougeL")


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float

    @staticmethod
    def from_pr(precision: float, recall: float) -> "ScoreTriple":
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
        return ScoreTriple(precision, recall, f1)


_ZERO = ScoreTriple(0.0, 0.0, 0.0)


def rouge_n(
    candidate_tokens: Sequence[str],
    reference_tokens: Sequence[str],
    n: int,
) -> ScoreTriple:
    """Clipped n-gram overlap precision/recall/F1.

    Degenerate inputs (either side has no n-grams) yield the zero triple.
    """
    cand = ngrams(candidate_tokens, n)
    ref = ngrams(reference_tokens, n)
    cand_total = cand.total()
    ref_total = ref.total()
    if cand_total == 0 or ref_total == 0:
        return _ZERO
    overlap = sum(
        min(count, ref.counts[gram])
        for gram, count in cand.counts.items()
        if gram in ref.counts
    )
    return ScoreTriple.from_pr(overlap / cand_total, overlap / ref_total)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row DP over the shorter sequence
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            if x == y:
                row[j] = prev_diag + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(
    candidate_tokens: Sequence[str],
    reference_tokens: Sequence[str],
) -> ScoreTriple:
    """Longest-common-subsequence precision/recall/F1 over whole sequences."""
    if not candidate_tokens or not reference_tokens:
        return _ZERO
    lcs = _lcs_length(candidate_tokens, reference_tokens)
    return ScoreTriple.from_pr(lcs / len(candidate_tokens), lcs / len(reference_tokens))


def native_scores(
    candidate_text: str,
    reference_text: str,
    tokenizer: TokenizerConfig = ROUGE_TOKENIZER,
) -> dict[str, float]:
    """F1 values of all native metrics for one (candidate, reference) pair."""
    cand = tokenize(candidate_text, tokenizer)
    ref = tokenize(reference_text, tokenizer)
    return {
        "rouge1": rouge_n(cand, ref, 1).f1,
        "rouge2": rouge_n(cand, ref, 2).f1,
        "rougeL": rouge_l(cand, ref).f1,
    }


def normalize_pool_scores(raw: Sequence[float]) -> list[float]:
    """Min-max normalize one metric's scores within one candidate pool.

    A degenerate pool (max == min) maps every candidate to 0.5 so that
    all-tied pools stay neutral when summing across metrics.
    """
    if len(raw) == 0:
        raise ValueError("cannot normalize an empty score list")
    lo = min(raw)
    hi = max(raw)
    if hi == lo:
        return [0.5] * len(raw)
    span = hi - lo
    return [(s - lo) / span for s in raw]


class UndefinedCorrelationError(ValueError):
    """Raised when Pearson correlation is requested for a constant series."""


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 points for correlation")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


def mean_relative_gain(
    system: Mapping[str, float],
    baselines: Mapping[str, float],
) -> float:
    """Mean over metrics of the relative improvement, in percent.

    ``baselines`` must hold, per metric, the best baseline mean among the
    compared systems (see :func:`best_baselines`).
    """
    if set(system) != set(baselines):
        raise ValueError(
            f"metric keys differ: {sorted(system)} vs {sorted(baselines)}"
        )
    if not system:
        raise ValueError("no metrics to compare")
    gains = []
    for name, base in baselines.items():
        if base <= 0:
            raise ValueError(f"baseline for {name!r} must be positive, got {base}")
        gains.append(100.0 * (system[name] / base - 1.0))
    return sum(gains) / len(gains)


def best_baselines(
    per_method: Mapping[str, Mapping[str, float]],
) -> dict[str, float]:
    """Per-metric best value across baseline methods (the gain denominator)."""
    if not per_method:
        raise ValueError("no baseline methods given")
    metric_sets = [set(v) for v in per_method.values()]
    for s in metric_sets[1:]:
        if s != metric_sets[0]:
            raise ValueError("baseline methods report different metric sets")
    return {
        name: max(scores[name] for scores in per_method.values())
        for name in metric_sets[0]
    }


class DuplicateMetricError(ValueError):
    """Raised when a metric name collides with an existing registration."""


@dataclass(frozen=True)
class MetricRegistry:
    """Ordered metric set: native metrics computed here, external ones
    ingested from dataset files.  Immutable; registration returns a new
    registry."""

    names: tuple[str, ...] = NATIVE_METRICS
    external_sources: Mapping[str, str] = None  # name -> provenance tag

    def __post_init__(self) -> None:
        if self.external_sources is None:
            object.__setattr__(self, "external_sources", {})
        if len(set(self.names)) != len(self.names):
            raise DuplicateMetricError(f"duplicate metric names in {self.names}")
        unknown = set(self.external_sources) - set(self.names)
        if unknown:
            raise ValueError(f"external sources for unregistered metrics: {unknown}")

    @property
    def external_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n in self.external_sources)

    @property
    def native_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n not in self.external_sources)

    def is_native(self, name: str) -> bool:
        return name in NATIVE_METRICS and name not in self.external_sources

    def index(self, name: str) -> int:
        return self.names.index(name)


def default_registry(metric_order: Iterable[str] = NATIVE_METRICS) -> MetricRegistry:
    order = tuple(metric_order)
    unknown = [n for n in order if n not in NATIVE_METRICS]
    if unknown:
        raise ValueError(
            f"unknown native metrics {unknown}; register external metrics explicitly"
        )
    return MetricRegistry(names=order)


def register_external_metric(
    registry: MetricRegistry,
    name: str,
    score_source: str = "dataset-file",
) -> MetricRegistry:
    """Append an externally scored metric; loaders will then require a score
    for it on every candidate."""
    if name in registry.names:
        raise DuplicateMetricError(f"metric {name!r} already registered")
    sources = dict(registry.external_sources)
    sources[name] = score_source
    return MetricRegistry(names=registry.names + (name,), external_sources=sources)
