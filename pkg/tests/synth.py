"""Synthetic candidate-pool datasets with a controllable feature signal.

Each example's reference is a 10-token string drawn from a fixed vocabulary
and embedded as a prefix of the source.  A candidate keeps a quality-
dependent prefix of the reference and pads with out-of-vocabulary noise
tokens, so native metric scores increase with quality.  Feature 0 is the
candidate's summed per-pool-normalized score plus calibrated heteroscedastic
noise (quieter near the top of the pool), hitting a target overall Pearson
correlation; the remaining features are pure noise.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from summarank.candidates import Candidate, CandidateExample, Dataset
from summarank.evaluation import summed_normalized_keys
from summarank.metrics import default_registry, native_scores, pearson

_VOCAB = [
    "mountain", "river", "forest", "stone", "cloud", "harbor", "window",
    "garden", "silver", "candle", "meadow", "lantern", "bridge", "valley",
    "thunder", "orchard", "marble", "copper", "willow", "falcon", "ember",
    "prairie", "cavern", "beacon", "timber", "harvest", "quarry", "saddle",
    "anchor", "compass",
]
_NOISE = [
    "zyx", "qeth", "vorp", "jilk", "wunx", "gribb", "snarf", "plonk",
    "drex", "yim", "kwof", "blurt",
]

_REF_LEN = 10
_EXTRA_SOURCE = 5


def synthetic_dataset(
    n_examples: int,
    pool_size: int = 8,
    seed: int = 0,
    methods: tuple[str, ...] = ("beam", "dbs"),
    rho: float = 0.9,
    feature_dim: int = 4,
) -> Dataset:
    rng = np.random.default_rng(seed)
    registry = default_registry()

    examples = []
    pool_keys = []
    for idx in range(n_examples):
        ref_tokens = [str(w) for w in rng.choice(_VOCAB, size=_REF_LEN, replace=False)]
        leftovers = [w for w in _VOCAB if w not in ref_tokens]
        extra = [str(w) for w in rng.choice(leftovers, size=_EXTRA_SOURCE, replace=False)]
        reference = " ".join(ref_tokens)
        source = " ".join(ref_tokens + extra)
        candidates = []
        for j in range(pool_size):
            quality = float(rng.uniform(0.0, 1.0))
            keep = 1 + int(round(quality * (_REF_LEN - 1)))
            pad = [str(w) for w in rng.choice(_NOISE, size=_REF_LEN - keep)]
            text = " ".join(ref_tokens[:keep] + pad)
            candidates.append(
                Candidate(
                    text=text,
                    method=methods[j % len(methods)],
                    scores=native_scores(text, reference),
                )
            )
        examples.append(
            CandidateExample(
                id=f"syn{idx:05d}",
                source=source,
                reference=reference,
                candidates=tuple(candidates),
            )
        )
        pool_keys.append(summed_normalized_keys(candidates, registry.names))

    # calibrate the feature noise so that corr(feature0, summed key) == rho:
    # rho^2 = var(s) / (var(s) + c^2 E[scale^2]) with scale = (K - s) / K
    K = float(len(registry.names))
    flat = np.array([k for keys in pool_keys for k in keys])
    scale = (K - flat) / K
    c = float(flat.std() * np.sqrt(1.0 / rho**2 - 1.0) / np.sqrt((scale**2).mean()))

    final = []
    for example, keys in zip(examples, pool_keys):
        rebuilt = []
        for candidate, s in zip(example.candidates, keys):
            f0 = s + c * ((K - s) / K) * float(rng.normal())
            noise = rng.normal(size=feature_dim - 1)
            rebuilt.append(
                dataclasses.replace(
                    candidate, features=(float(f0), *(float(v) for v in noise))
                )
            )
        final.append(dataclasses.replace(example, candidates=tuple(rebuilt)))
    return Dataset(examples=tuple(final), registry=registry, methods=tuple(methods))


def feature_score_correlation(dataset: Dataset) -> float:
    """Pearson correlation between feature 0 and the summed normalized score
    over every candidate in the dataset."""
    f0 = []
    keys = []
    for example in dataset:
        pool = list(example.candidates)
        for candidate, key in zip(pool, summed_normalized_keys(pool, dataset.registry.names)):
            f0.append(candidate.features[0])
            keys.append(key)
    return pearson(f0, keys)
