import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_candidate, make_dataset, make_example
from summarank.errors import ValidationError
from summarank.model import ModelConfig, init_model
from summarank.training import (
    TrainConfig,
    build_training_pairs,
    run_half_split_protocol,
    train,
    train_config_hash,
)

METRICS = ("rouge1", "rouge2", "rougeL")


def quality_candidate(q, method="beam", feature_extra=(0.0, 0.0), f0=None):
    """Scores are affine in a scalar quality, so every ranking rule agrees."""
    scores = {
        "rouge1": 0.20 + 0.60 * q,
        "rouge2": 0.10 + 0.50 * q,
        "rougeL": 0.15 + 0.55 * q,
    }
    return make_candidate(
        text="mountain river",
        method=method,
        scores=scores,
        features=(q if f0 is None else f0, *feature_extra),
    )


def quality_dataset(n_examples, pool_size, seed, noise=0.0, methods=("beam",)):
    """Feature 0 tracks the summed normalized score up to Gaussian noise."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_examples):
        qs = rng.uniform(0, 1, size=pool_size)
        lo, hi = qs.min(), qs.max()
        keys = 3.0 * (qs - lo) / (hi - lo) if hi > lo else np.full(pool_size, 1.5)
        candidates = [
            quality_candidate(
                float(q),
                method=methods[j % len(methods)],
                f0=float(k + rng.normal(scale=noise) if noise else k),
                feature_extra=tuple(rng.normal(size=2)),
            )
            for j, (q, k) in enumerate(zip(qs, keys))
        ]
        examples.append(make_example(example_id=f"q{i:04d}", candidates=candidates))
    return make_dataset(examples, methods=methods)


def small_config(**overrides):
    base = dict(
        train_methods=("beam",),
        metrics=METRICS,
        epochs=3,
        batch_size=16,
        peak_lr=0.01,
        seed=0,
        bottom_sizes=(8, 8),
        expert_sizes=(8, 4),
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig(train_methods=("beam", "dbs"))
        assert cfg.epochs == 5
        assert cfg.batch_size == 32
        assert cfg.m_top == 1 and cfg.m_bottom == 1
        assert cfg.warmup_frac == 0.05
        assert cfg.label_scope == "subset"

    def test_rejects_bad_values(self):
        with pytest.raises(ValidationError):
            TrainConfig(train_methods=())
        with pytest.raises(ValidationError):
            TrainConfig(train_methods=("beam",), metrics=())
        with pytest.raises(ValidationError):
            TrainConfig(train_methods=("beam",), epochs=-1)
        with pytest.raises(ValidationError):
            TrainConfig(train_methods=("beam",), batch_size=0)
        with pytest.raises(ValidationError):
            TrainConfig(train_methods=("beam",), label_scope="everything")

    def test_hash_is_stable_and_sensitive(self):
        a = small_config()
        b = small_config()
        c = small_config(seed=1)
        assert train_config_hash(a) == train_config_hash(b)
        assert train_config_hash(a) != train_config_hash(c)


class TestBuildTrainingPairs:
    def test_two_candidates_per_example(self):
        dataset = quality_dataset(10, pool_size=5, seed=0)
        pairs = build_training_pairs(dataset, small_config())
        assert len(pairs) == 10
        for pair in pairs:
            assert pair.features.shape == (2, 3)
            assert pair.labels.shape == (2, 3)

    def test_subset_labels_mark_the_local_best(self):
        # distinct qualities: the sampled pair is (best, worst)
        candidates = [quality_candidate(q) for q in (0.5, 0.9, 0.1)]
        dataset = make_dataset(
            [make_example(example_id="e0", candidates=candidates)], methods=("beam",)
        )
        pair = build_training_pairs(dataset, small_config())[0]
        assert_allclose(pair.features[:, 0], [0.9, 0.1])
        assert_allclose(pair.labels, [[1, 1, 1], [0, 0, 0]])

    def test_pool_scope_can_zero_the_subset_best(self):
        # c0 wins the sum, c1 wins rouge2 alone, c2 is worst overall
        c0 = make_candidate(
            method="beam",
            scores={"rouge1": 0.9, "rouge2": 0.5, "rougeL": 0.9},
            features=(0.9,),
        )
        c1 = make_candidate(
            method="beam",
            scores={"rouge1": 0.6, "rouge2": 0.8, "rougeL": 0.6},
            features=(0.6,),
        )
        c2 = make_candidate(
            method="beam",
            scores={"rouge1": 0.1, "rouge2": 0.1, "rougeL": 0.1},
            features=(0.1,),
        )
        dataset = make_dataset(
            [make_example(example_id="e0", candidates=[c0, c1, c2])],
            methods=("beam",),
        )
        subset_pair = build_training_pairs(dataset, small_config())[0]
        pool_pair = build_training_pairs(
            dataset, small_config(label_scope="pool")
        )[0]
        # within the (c0, c2) subset c0 is best on every metric
        assert_allclose(subset_pair.labels, [[1, 1, 1], [0, 0, 0]])
        # against the full pool c0 loses rouge2 to the excluded c1
        assert_allclose(pool_pair.labels, [[1, 0, 1], [0, 0, 0]])

    def test_contents_fixed_across_epochs_order_reshuffled(self):
        dataset = quality_dataset(40, pool_size=4, seed=1)
        config = small_config()
        first = build_training_pairs(dataset, config, epoch=1)
        second = build_training_pairs(dataset, config, epoch=2)
        by_id_first = {p.example_id: p for p in first}
        by_id_second = {p.example_id: p for p in second}
        assert set(by_id_first) == set(by_id_second)
        for example_id, pair in by_id_first.items():
            other = by_id_second[example_id]
            assert_allclose(pair.features, other.features)
            assert_allclose(pair.labels, other.labels)
        assert [p.example_id for p in first] != [p.example_id for p in second]

    def test_same_seed_same_stream(self):
        dataset = quality_dataset(20, pool_size=4, seed=2)
        config = small_config()
        a = build_training_pairs(dataset, config, epoch=3)
        b = build_training_pairs(dataset, config, epoch=3)
        assert [p.example_id for p in a] == [p.example_id for p in b]

    def test_only_train_methods_consumed(self):
        inside = quality_candidate(0.4, method="beam")
        also_inside = quality_candidate(0.6, method="beam")
        outside = make_candidate(
            method="topk",
            scores={"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0},
            features=(99.0,),
        )
        dataset = make_dataset(
            [make_example(example_id="e0", candidates=[inside, outside, also_inside])],
            methods=("beam", "topk"),
        )
        pair = build_training_pairs(dataset, small_config())[0]
        assert 99.0 not in pair.features[:, 0]
        assert_allclose(sorted(pair.features[:, 0]), [0.4, 0.6])

    def test_pool_too_small_for_sampling(self):
        dataset = quality_dataset(3, pool_size=1, seed=3)
        with pytest.raises(ValidationError):
            build_training_pairs(dataset, small_config())


class TestTrain:
    def test_zero_epochs_returns_initialization(self):
        train_set = quality_dataset(8, pool_size=4, seed=4)
        val_set = quality_dataset(4, pool_size=4, seed=5)
        config = small_config(epochs=0)
        result = train(train_set, val_set, config)
        assert len(result.checkpoints) == 1
        checkpoint = result.checkpoints[0]
        assert checkpoint.epoch == 0
        assert result.best is checkpoint
        reference = init_model(
            ModelConfig(
                input_dim=3,
                num_tasks=3,
                bottom_sizes=config.bottom_sizes,
                expert_sizes=config.expert_sizes,
                seed=config.seed,
            ),
            metric_names=config.metrics,
            train_methods=config.train_methods,
        )
        for name, value in reference.params.items():
            assert_allclose(checkpoint.model.params[name], value)

    def test_checkpoint_list_and_best_selection(self):
        train_set = quality_dataset(24, pool_size=4, seed=6)
        val_set = quality_dataset(10, pool_size=4, seed=7)
        result = train(train_set, val_set, small_config(epochs=4))
        assert len(result.checkpoints) == 4
        assert [c.epoch for c in result.checkpoints] == [1, 2, 3, 4]
        scores = [c.validation_score for c in result.checkpoints]
        assert result.best.validation_score == max(scores)
        first_best = min(i for i, s in enumerate(scores) if s == max(scores))
        assert result.best is result.checkpoints[first_best]

    def test_all_tied_scores_keep_earliest_checkpoint(self):
        candidates = [
            make_candidate(
                method="beam",
                scores={"rouge1": 0.5, "rouge2": 0.5, "rougeL": 0.5},
                features=(float(j), 0.0, 0.0),
            )
            for j in range(3)
        ]
        examples = [
            make_example(example_id=f"e{i}", candidates=candidates) for i in range(6)
        ]
        dataset = make_dataset(examples, methods=("beam",))
        result = train(dataset, dataset, small_config(epochs=3))
        scores = [c.validation_score for c in result.checkpoints]
        assert len(set(scores)) == 1
        assert result.best.epoch == 1

    def test_deterministic_under_seed(self):
        train_set = quality_dataset(20, pool_size=4, seed=8)
        val_set = quality_dataset(8, pool_size=4, seed=9)
        config = small_config(epochs=2)
        a = train(train_set, val_set, config)
        b = train(train_set, val_set, config)
        assert a.best.epoch == b.best.epoch
        assert a.best.validation_score == b.best.validation_score
        for name, value in a.best.model.params.items():
            assert np.array_equal(value, b.best.model.params[name])

    def test_learns_separable_signal_to_near_oracle(self):
        train_set = quality_dataset(80, pool_size=6, seed=10, noise=0.01)
        val_set = quality_dataset(40, pool_size=6, seed=11, noise=0.01)
        config = small_config(epochs=8, peak_lr=0.02)
        result = train(train_set, val_set, config)
        oracle = float(
            np.mean(
                [
                    max(sum(c.scores[m] for m in METRICS) for c in example.candidates)
                    for example in val_set
                ]
            )
        )
        assert result.best.validation_score >= 0.99 * oracle

    def test_model_records_methods_and_metrics(self):
        train_set = quality_dataset(8, pool_size=3, seed=12)
        val_set = quality_dataset(4, pool_size=3, seed=13)
        result = train(train_set, val_set, small_config(epochs=1))
        assert result.best.model.metric_names == METRICS
        assert result.best.model.train_methods == ("beam",)

    def test_empty_datasets_rejected(self):
        dataset = quality_dataset(4, pool_size=3, seed=14)
        empty = make_dataset([], methods=("beam",))
        with pytest.raises(ValidationError):
            train(empty, dataset, small_config())
        with pytest.raises(ValidationError):
            train(dataset, empty, small_config())


class TestHalfSplitProtocol:
    def _provenance(self):
        return {
            "half_a": {"generator": "base model fit on half B"},
            "half_b": {"generator": "base model fit on half A"},
        }

    def test_merges_disjoint_halves_and_documents_them(self):
        half_a = quality_dataset(10, pool_size=4, seed=15)
        half_b_raw = quality_dataset(9, pool_size=4, seed=16)
        half_b = make_dataset(
            [
                make_example(example_id=f"b{i}", candidates=e.candidates)
                for i, e in enumerate(half_b_raw)
            ],
            methods=("beam",),
        )
        val = quality_dataset(5, pool_size=4, seed=17)
        test = quality_dataset(5, pool_size=4, seed=18)
        config = small_config(epochs=1)
        artifacts = run_half_split_protocol(
            half_a, half_b, val, test, config, self._provenance()
        )
        manifest = artifacts.manifest
        assert len(manifest["half_a_ids"]) == 10
        assert len(manifest["half_b_ids"]) == 9
        assert manifest["val_ids"] == [e.id for e in val]
        assert manifest["test_ids"] == [e.id for e in test]
        assert manifest["provenance"]["half_a"]["generator"].startswith("base model")
        assert manifest["config_hash"] == train_config_hash(config)
        assert manifest["split_seed"] == config.seed
        assert len(artifacts.result.checkpoints) == 1

    def test_overlapping_ids_refused(self):
        half_a = quality_dataset(6, pool_size=3, seed=19)
        half_b = quality_dataset(6, pool_size=3, seed=20)  # same id scheme
        val = quality_dataset(3, pool_size=3, seed=21)
        test = quality_dataset(3, pool_size=3, seed=22)
        with pytest.raises(ValidationError, match="leakage"):
            run_half_split_protocol(
                half_a, half_b, val, test, small_config(), self._provenance()
            )

    def test_missing_generator_refused(self):
        half_a = quality_dataset(4, pool_size=3, seed=23)
        half_b = make_dataset(
            [
                make_example(example_id=f"b{i}", candidates=e.candidates)
                for i, e in enumerate(quality_dataset(4, pool_size=3, seed=24))
            ],
            methods=("beam",),
        )
        val = quality_dataset(2, pool_size=3, seed=25)
        test = quality_dataset(2, pool_size=3, seed=26)
        bad = {"half_a": {"generator": "ok"}, "half_b": {}}
        with pytest.raises(ValidationError, match="generator"):
            run_half_split_protocol(
                half_a, half_b, val, test, small_config(), bad
            )
