"""Fixed-dimensional representations of (source, candidate) pairs.

This is the pluggable stand-in for a document encoder: either cheap lexical
features computed here, or precomputed vectors loaded from a file (e.g.
encoder embeddings exported by some other system).  Either way the contract
downstream is just "a deterministic map (source, candidate) -> real^dim".

Lexical feature index map (with the default n-gram orders (1, 2, 3)):

    0                       candidate token count / length_cap, clipped
    1                       truncated source token count / source_cap
    2                       min(candidate_len / source_len, 1)
    3 + 2j                  n-gram overlap precision vs source, order n_j
    4 + 2j                  n-gram overlap recall vs source, order n_j
    3 + 2*len(orders) + j   novel n-gram fraction, order n_j (0 if undefined)
    dim - 1                 distinct-token fraction of the candidate

All values lie in [0, 1] by construction.  The reference summary is never
consulted, so features cannot leak label information.  An empty candidate
produces the all-zero vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .candidates import Candidate, CandidateExample, Dataset
from .errors import DatasetFormatError, NumericError, ValidationError
from .metrics import rouge_n
from .textproc import NOVELTY_TOKENIZER, UndefinedNoveltyError, novel_ngram_fraction, tokenize

__all__ = [
    "FeatureConfig",
    "FeatureStore",
    "extract_lexical",
    "lexical_dim",
    "load_precomputed",
    "featurize_dataset",
    "features_matrix",
]

_MODES = ("lexical", "precomputed")


@dataclass(frozen=True)
class FeatureConfig:
    mode: str = "lexical"
    ngram_orders: tuple[int, ...] = (1, 2, 3)
    length_cap: int = 128
    source_cap: int = 512

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValidationError(f"feature mode must be one of {_MODES}, got {self.mode!r}")
        if not self.ngram_orders or any(n < 1 for n in self.ngram_orders):
            raise ValidationError("ngram_orders must be nonempty positive integers")
        if self.length_cap < 1 or self.source_cap < 1:
            raise ValidationError("length caps must be >= 1")

    @property
    def dim(self) -> int:
        return 3 + 3 * len(self.ngram_orders) + 1


def lexical_dim(config: FeatureConfig) -> int:
    return config.dim


def extract_lexical(source: str, candidate_text: str, config: FeatureConfig) -> np.ndarray:
    """Deterministic lexical feature vector; see the module docstring for
    the index map."""
    if config.mode != "lexical":
        raise ValidationError("extract_lexical requires mode='lexical'")
    vector = np.zeros(config.dim, dtype=np.float64)
    cand_tokens = tokenize(candidate_text, NOVELTY_TOKENIZER)
    if not cand_tokens:
        return vector
    src_tokens = tokenize(source, NOVELTY_TOKENIZER)[: config.source_cap]
    n_cand = len(cand_tokens)
    n_src = len(src_tokens)
    vector[0] = min(n_cand / config.length_cap, 1.0)
    vector[1] = n_src / config.source_cap
    vector[2] = min(n_cand / n_src, 1.0) if n_src else 0.0
    base = 3
    for j, order in enumerate(config.ngram_orders):
        triple = rouge_n(cand_tokens, src_tokens, order)
        vector[base + 2 * j] = triple.precision
        vector[base + 2 * j + 1] = triple.recall
    nov_base = base + 2 * len(config.ngram_orders)
    for j, order in enumerate(config.ngram_orders):
        try:
            vector[nov_base + j] = novel_ngram_fraction(cand_tokens, src_tokens, order)
        except UndefinedNoveltyError:
            vector[nov_base + j] = 0.0
    vector[config.dim - 1] = len(set(cand_tokens)) / n_cand
    return vector


@dataclass(frozen=True)
class FeatureStore:
    """Precomputed vectors keyed by (example id, candidate load index)."""

    dim: int
    vectors: Mapping[tuple[str, int], tuple[float, ...]]

    def attach(self, dataset: Dataset) -> Dataset:
        """Return a dataset copy with every candidate's features filled in."""
        examples = []
        for example in dataset:
            candidates = tuple(
                Candidate(
                    text=c.text,
                    method=c.method,
                    scores=c.scores,
                    features=self.vectors[(example.id, i)],
                    empty=c.empty,
                )
                for i, c in enumerate(example.candidates)
            )
            examples.append(
                CandidateExample(
                    id=example.id,
                    source=example.source,
                    reference=example.reference,
                    candidates=candidates,
                )
            )
        return Dataset(
            examples=tuple(examples), registry=dataset.registry, methods=dataset.methods
        )


def load_precomputed(path, dataset: Dataset) -> FeatureStore:
    """Load a line-delimited feature file and align it with ``dataset``.

    Every (id, index) pair in the dataset must appear exactly once with a
    uniform vector length; anything else is a validation error.
    """
    vectors: dict[tuple[str, int], tuple[float, ...]] = {}
    dim: int | None = None
    expected = {
        (example.id, i) for example in dataset for i in range(len(example.candidates))
    }
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            try:
                key = (record["id"], int(record["index"]))
                raw = record["vector"]
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(
                    f"line {line_no}: need fields id, index, vector"
                ) from exc
            if key not in expected:
                raise ValidationError(
                    f"line {line_no}: feature vector for unknown candidate {key}"
                )
            if key in vectors:
                raise ValidationError(f"line {line_no}: duplicate feature vector for {key}")
            if not isinstance(raw, list) or not raw:
                raise DatasetFormatError(f"line {line_no}: vector must be a nonempty array")
            if any(not math.isfinite(v) for v in raw):
                raise NumericError(f"line {line_no}: non-finite feature value for {key}")
            if dim is None:
                dim = len(raw)
            elif len(raw) != dim:
                raise ValidationError(
                    f"line {line_no}: ragged dimensions ({len(raw)} vs {dim}) for {key}"
                )
            vectors[key] = tuple(float(v) for v in raw)
    missing = expected - set(vectors)
    if missing:
        example_id, index = sorted(missing)[0]
        raise ValidationError(
            f"missing feature vector for (id={example_id!r}, index={index})"
            + (f" and {len(missing) - 1} more" if len(missing) > 1 else "")
        )
    return FeatureStore(dim=int(dim), vectors=vectors)


def featurize_dataset(dataset: Dataset, config: FeatureConfig) -> Dataset:
    """Fill candidate features.

    Lexical mode computes them; precomputed mode only checks they are
    already attached (via :meth:`FeatureStore.attach` or the dataset file)
    and consistent.
    """
    if config.mode == "precomputed":
        dims = {
            len(c.features)
            for example in dataset
            for c in example.candidates
            if c.features is not None
        }
        missing = any(
            c.features is None for example in dataset for c in example.candidates
        )
        if missing or not dims:
            raise ValidationError(
                "precomputed mode requires features on every candidate; "
                "attach a feature store or include them in the dataset file"
            )
        if len(dims) > 1:
            raise ValidationError(f"ragged feature dimensions in dataset: {sorted(dims)}")
        return dataset
    examples = []
    for example in dataset:
        candidates = tuple(
            Candidate(
                text=c.text,
                method=c.method,
                scores=c.scores,
                features=tuple(extract_lexical(example.source, c.text, config)),
                empty=c.empty,
            )
            for c in example.candidates
        )
        examples.append(
            CandidateExample(
                id=example.id,
                source=example.source,
                reference=example.reference,
                candidates=candidates,
            )
        )
    return Dataset(examples=tuple(examples), registry=dataset.registry, methods=dataset.methods)


def features_matrix(pool: Sequence[Candidate]) -> np.ndarray:
    """Stack the pool's feature vectors into an (m, dim) array."""
    rows = []
    for i, candidate in enumerate(pool):
        if candidate.features is None:
            raise ValidationError(f"candidate {i} has no features attached")
        rows.append(candidate.features)
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValidationError("ragged feature vectors in pool")
    return matrix
