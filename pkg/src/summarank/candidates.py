"""Dataset model and persistence for candidate pools.

File format: UTF-8 line-delimited records, one example per line:

    {"id": str, "source": str, "reference": str,
     "candidates": [{"text": str, "method": str,
                     "scores": {metric: number, ...}?,   # optional
                     "features": [number, ...]?}, ...]}  # optional

Unknown fields are rejected in strict mode and ignored with a warning
otherwise.  Native ROUGE scores are computed at load time when absent;
external metric scores must already be present for every candidate.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DatasetFormatError, NumericError, PoolError, ValidationError
from .metrics import MetricRegistry, native_scores, normalize_pool_scores
from .textproc import NOVELTY_TOKENIZER, tokenize

__all__ = [
    "Candidate",
    "CandidateExample",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "merge_pools",
    "label_pool",
    "sample_training_candidates",
    "unique_score_count",
    "identical_pool_fraction",
    "half_split",
    "score_of",
]

logger = logging.getLogger(__name__)

_EXAMPLE_FIELDS = {"id", "source", "reference", "candidates"}
_CANDIDATE_FIELDS = {"text", "method", "scores", "features"}


@dataclass(frozen=True)
class Candidate:
    text: str
    method: str
    scores: Mapping[str, float] = field(default_factory=dict)
    features: tuple[float, ...] | None = None
    empty: bool = False  # true when the text tokenizes to nothing


@dataclass(frozen=True)
class CandidateExample:
    id: str
    source: str
    reference: str
    candidates: tuple[Candidate, ...]


@dataclass(frozen=True)
class Dataset:
    examples: tuple[CandidateExample, ...]
    registry: MetricRegistry
    methods: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[CandidateExample]:
        return iter(self.examples)

    def __getitem__(self, i: int) -> CandidateExample:
        return self.examples[i]


def score_of(candidate: Candidate, metric: str) -> float:
    try:
        return candidate.scores[metric]
    except KeyError:
        raise ValidationError(f"candidate has no score for metric {metric!r}") from None


def _require(record: Mapping, key: str, kind, line_no: int):
    if key not in record:
        raise DatasetFormatError(f"line {line_no}: missing field {key!r}")
    value = record[key]
    if not isinstance(value, kind):
        raise DatasetFormatError(
            f"line {line_no}: field {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _check_unknown(keys, allowed, where: str, strict: bool) -> None:
    unknown = sorted(set(keys) - allowed)
    if not unknown:
        return
    if strict:
        raise DatasetFormatError(f"{where}: unknown fields {unknown}")
    logger.warning("%s: ignoring unknown fields %s", where, unknown)


def _parse_candidate(
    raw: Mapping,
    registry: MetricRegistry,
    methods: tuple[str, ...],
    example_id: str,
    index: int,
    line_no: int,
    reference: str,
    strict: bool,
) -> Candidate:
    where = f"line {line_no}: example {example_id!r} candidate {index}"
    if not isinstance(raw, dict):
        raise DatasetFormatError(f"{where}: candidate must be an object")
    _check_unknown(raw.keys(), _CANDIDATE_FIELDS, where, strict)
    text = _require(raw, "text", str, line_no)
    method = _require(raw, "method", str, line_no)
    if method not in methods:
        raise DatasetFormatError(
            f"{where}: unknown method {method!r}; allowed methods are {list(methods)}"
        )
    scores: dict[str, float] = {}
    raw_scores = raw.get("scores", {})
    if not isinstance(raw_scores, dict):
        raise DatasetFormatError(f"{where}: 'scores' must be an object")
    for name, value in raw_scores.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise DatasetFormatError(f"{where}: score {name!r} is not a number")
        if not math.isfinite(value):
            raise NumericError(f"{where}: score {name!r} is not finite")
        if name not in registry.names:
            if strict:
                raise DatasetFormatError(f"{where}: score for unregistered metric {name!r}")
            logger.warning("%s: keeping score for unregistered metric %r", where, name)
        scores[name] = float(value)
    missing_external = [n for n in registry.external_names if n not in scores]
    if missing_external:
        raise DatasetFormatError(
            f"{where}: missing external metric scores {missing_external}"
        )
    native_missing = [n for n in registry.native_names if n not in scores]
    if native_missing:
        computed = native_scores(text, reference)
        for name in native_missing:
            scores[name] = computed[name]
    features = None
    if "features" in raw:
        vec = raw["features"]
        if not isinstance(vec, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec
        ):
            raise DatasetFormatError(f"{where}: 'features' must be an array of numbers")
        if any(not math.isfinite(v) for v in vec):
            raise NumericError(f"{where}: non-finite feature value")
        features = tuple(float(v) for v in vec)
    return Candidate(
        text=text,
        method=method,
        scores=scores,
        features=features,
        empty=not tokenize(text, NOVELTY_TOKENIZER),
    )


def load_dataset(
    path,
    registry: MetricRegistry,
    methods: Iterable[str],
    strict: bool = False,
) -> Dataset:
    """Load and validate a line-delimited candidate dataset."""
    methods = tuple(methods)
    if not methods:
        raise ValidationError("allowed method set must be nonempty")
    examples: list[CandidateExample] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DatasetFormatError(f"line {line_no}: record must be an object")
            _check_unknown(record.keys(), _EXAMPLE_FIELDS, f"line {line_no}", strict)
            example_id = _require(record, "id", str, line_no)
            if example_id in seen_ids:
                raise DatasetFormatError(f"line {line_no}: duplicate id {example_id!r}")
            seen_ids.add(example_id)
            source = _require(record, "source", str, line_no)
            reference = _require(record, "reference", str, line_no)
            raw_candidates = _require(record, "candidates", list, line_no)
            if not raw_candidates:
                raise DatasetFormatError(f"line {line_no}: example has no candidates")
            candidates = tuple(
                _parse_candidate(
                    raw, registry, methods, example_id, i, line_no, reference, strict
                )
                for i, raw in enumerate(raw_candidates)
            )
            examples.append(
                CandidateExample(
                    id=example_id,
                    source=source,
                    reference=reference,
                    candidates=candidates,
                )
            )
    return Dataset(examples=tuple(examples), registry=registry, methods=methods)


def _candidate_record(candidate: Candidate) -> dict:
    record: dict = {"text": candidate.text, "method": candidate.method}
    if candidate.scores:
        record["scores"] = {k: candidate.scores[k] for k in sorted(candidate.scores)}
    if candidate.features is not None:
        record["features"] = list(candidate.features)
    return record


def save_dataset(dataset: Dataset, path) -> None:
    """Write the dataset back out; stable field and key order."""
    with open(path, "w", encoding="utf-8") as handle:
        for example in dataset:
            record = {
                "id": example.id,
                "source": example.source,
                "reference": example.reference,
                "candidates": [_candidate_record(c) for c in example.candidates],
            }
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def merge_pools(example: CandidateExample, methods: Sequence[str]) -> list[Candidate]:
    """Concatenate the example's candidates for ``methods``, grouped in the
    given method order with load order preserved inside each method.  No
    deduplication."""
    if not methods:
        raise PoolError("method subset must be nonempty")
    pool = [c for m in methods for c in example.candidates if c.method == m]
    if not pool:
        raise PoolError(
            f"example {example.id!r} has no candidates for methods {list(methods)}"
        )
    return pool


def label_pool(pool: Sequence[Candidate], metric: str) -> list[int]:
    """1 for every candidate attaining the pool maximum, 0 otherwise."""
    scores = [score_of(c, metric) for c in pool]
    best = max(scores)
    return [1 if s == best else 0 for s in scores]


def pool_rank_keys(pool: Sequence[Candidate], registry: MetricRegistry) -> list[float]:
    """Summed per-metric min-max-normalized scores, the pool ranking key."""
    sums = [0.0] * len(pool)
    for metric in registry.names:
        normed = normalize_pool_scores([score_of(c, metric) for c in pool])
        for i, v in enumerate(normed):
            sums[i] += v
    return sums


def sample_training_candidates(
    pool: Sequence[Candidate],
    m_top: int,
    m_bottom: int,
    registry: MetricRegistry,
    seed: int | None = None,
) -> list[Candidate]:
    """Keep the strongest ``m_top`` and weakest ``m_bottom`` candidates.

    Candidates are ranked by decreasing sum of per-metric normalized scores,
    ties broken by load order.  The ranking is fully deterministic, so
    ``seed`` is accepted for signature stability but currently unused.
    """
    del seed
    if m_top < 1 or m_bottom < 1:
        raise ValidationError("m_top and m_bottom must both be >= 1")
    if m_top + m_bottom > len(pool):
        raise PoolError(
            f"pool of {len(pool)} cannot supply m_top={m_top} + m_bottom={m_bottom}"
        )
    sums = pool_rank_keys(pool, registry)
    ranking = sorted(range(len(pool)), key=lambda i: (-sums[i], i))
    chosen = ranking[:m_top] + ranking[len(ranking) - m_bottom :]
    return [pool[i] for i in chosen]


def unique_score_count(pool: Sequence[Candidate], metric: str) -> int:
    """Distinct score values after rounding to 6 decimals."""
    return len({round(score_of(c, metric), 6) for c in pool})


def identical_pool_fraction(dataset: Dataset, metric: str, method: str) -> float:
    """Fraction of examples whose per-method pool is entirely tied on
    ``metric``.  Examples lacking the method are excluded from the
    denominator."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    tied = 0
    covered = 0
    for example in dataset:
        pool = [c for c in example.candidates if c.method == method]
        if not pool:
            continue
        covered += 1
        if unique_score_count(pool, metric) == 1:
            tied += 1
    if covered == 0:
        raise PoolError(f"no example has candidates for method {method!r}")
    return tied / covered


def half_split(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic random partition; the first half gets the extra example
    when the size is odd."""
    n = len(dataset)
    if n < 2:
        raise ValidationError("need at least 2 examples to split")
    order = np.random.default_rng(seed).permutation(n)
    cut = (n + 1) // 2
    half_a = tuple(dataset.examples[int(i)] for i in order[:cut])
    half_b = tuple(dataset.examples[int(i)] for i in order[cut:])
    return (
        replace(dataset, examples=half_a),
        replace(dataset, examples=half_b),
    )
