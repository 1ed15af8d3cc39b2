import json

import pytest

from summarank.config import (
    RunConfig,
    load_run_config,
    parse_run_config,
    write_resolved_config,
)
from summarank.errors import ValidationError
from summarank.metrics import NATIVE_METRICS


def minimal_raw(**overrides):
    raw = {
        "data": {"train": "train.jsonl", "val": "val.jsonl"},
        "methods": {"train": ["beam", "dbs"]},
    }
    raw.update(overrides)
    return raw


class TestParsing:
    def test_minimal_config_fills_defaults(self):
        config = parse_run_config(minimal_raw())
        assert config.metrics == NATIVE_METRICS
        assert config.train_methods == ("beam", "dbs")
        assert config.test_methods == ("beam", "dbs")
        assert config.feature_config.mode == "lexical"
        assert config.model["bottom_sizes"] == (64, 64)
        assert config.training["epochs"] == 5
        assert config.seed == 0
        assert config.out_dir == "."

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ValidationError, match="optimizerr"):
            parse_run_config(minimal_raw(optimizerr={}))

    def test_unknown_section_key_rejected(self):
        raw = minimal_raw(training={"epochs": 2, "momentum": 0.9})
        with pytest.raises(ValidationError, match="momentum"):
            parse_run_config(raw)

    def test_missing_train_methods_rejected(self):
        raw = minimal_raw()
        del raw["methods"]
        with pytest.raises(ValidationError, match="methods.train"):
            parse_run_config(raw)

    def test_test_methods_must_be_subset(self):
        raw = minimal_raw(methods={"train": ["beam"], "test": ["beam", "dbs"]})
        with pytest.raises(ValidationError, match="subset"):
            parse_run_config(raw)

    def test_test_methods_default_to_train(self):
        config = parse_run_config(minimal_raw(methods={"train": ["dbs", "beam"]}))
        assert config.test_methods == ("dbs", "beam")

    def test_precomputed_mode_requires_path(self):
        raw = minimal_raw(features={"mode": "precomputed"})
        with pytest.raises(ValidationError, match="path"):
            parse_run_config(raw)

    def test_precomputed_path_as_split_mapping(self):
        raw = minimal_raw(
            features={"mode": "precomputed", "path": {"train": "a", "val": "b"}}
        )
        config = parse_run_config(raw)
        assert config.feature_path == {"train": "a", "val": "b"}

    def test_feature_path_mapping_rejects_unknown_split(self):
        raw = minimal_raw(
            features={"mode": "precomputed", "path": {"dev": "a"}}
        )
        with pytest.raises(ValidationError, match="dev"):
            parse_run_config(raw)

    def test_invalid_training_value_surfaces_at_parse_time(self):
        raw = minimal_raw(training={"epochs": -1})
        with pytest.raises(ValidationError):
            parse_run_config(raw)

    def test_bad_seed_type(self):
        with pytest.raises(ValidationError, match="seed"):
            parse_run_config(minimal_raw(seed="zero"))

    def test_non_object_config_rejected(self):
        with pytest.raises(ValidationError):
            parse_run_config(["not", "a", "mapping"])


class TestTrainConfigBridge:
    def test_training_section_maps_onto_train_config(self):
        raw = minimal_raw(
            metrics=["rouge1", "rouge2"],
            model={"bottom_sizes": [8, 8], "expert_sizes": [8, 4], "num_experts": 3},
            training={"epochs": 2, "batch_size": 4, "label_scope": "pool"},
            seed=7,
        )
        tc = parse_run_config(raw).train_config()
        assert tc.metrics == ("rouge1", "rouge2")
        assert tc.num_experts == 3
        assert tc.epochs == 2
        assert tc.batch_size == 4
        assert tc.label_scope == "pool"
        assert tc.seed == 7


class TestResolvedSnapshot:
    def test_round_trips_through_parse(self):
        raw = minimal_raw(
            metrics=["rouge1", "rougeL"],
            training={"epochs": 3},
            seed=11,
            out_dir="runs/a",
        )
        config = parse_run_config(raw)
        again = parse_run_config(config.resolved())
        assert again == config

    def test_written_file_is_stable(self, tmp_path):
        config = parse_run_config(minimal_raw())
        first = write_resolved_config(config, tmp_path)
        blob = open(first, "rb").read()
        write_resolved_config(config, tmp_path)
        assert open(first, "rb").read() == blob
        parsed = json.loads(blob)
        assert parsed["methods"]["train"] == ["beam", "dbs"]
        assert parsed["training"]["epochs"] == 5

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ValidationError, match="invalid JSON"):
            load_run_config(path)

    def test_load_parses_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(minimal_raw(seed=3)))
        config = load_run_config(path)
        assert isinstance(config, RunConfig)
        assert config.seed == 3
