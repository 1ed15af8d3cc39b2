import json

import numpy as np

from summarank import reports
from summarank.evaluation import (
    MetricSignificance,
    NoveltyReport,
    OverlapStats,
    RecallCurve,
    SubsampleCurve,
)


class TestFormatting:
    def test_score_is_percent_with_two_decimals(self):
        assert reports.format_score(0.4716) == "47.16"
        assert reports.format_score(0.0) == "0.00"
        assert reports.format_score(1.0) == "100.00"

    def test_pvalue_four_significant_digits(self):
        assert reports.format_pvalue(0.39100221895) == "0.391"
        assert reports.format_pvalue(1.2345e-7) == "1.235e-07"

    def test_fraction_handles_nan(self):
        assert reports.format_fraction(float("nan")) == "nan"
        assert reports.format_fraction(0.25) == "0.2500"


class TestReportWriter:
    def test_emits_text_and_jsonl_mirrors(self, tmp_path):
        writer = reports.ReportWriter(str(tmp_path))
        rows = [{"metric": "rouge1", "score": "47.16"}]
        txt, jsonl = writer.emit("metric_table", "Title line", rows)
        lines = open(txt).read().splitlines()
        assert lines[0] == "Title line"
        assert lines[1] == "metric=rouge1  score=47.16"
        mirrored = [json.loads(line) for line in open(jsonl)]
        assert mirrored == rows

    def test_rewrite_is_byte_identical(self, tmp_path):
        writer = reports.ReportWriter(str(tmp_path))
        rows = [{"a": "1"}, {"a": "2"}]
        txt, jsonl = writer.emit("r", "T", rows)
        blobs = (open(txt, "rb").read(), open(jsonl, "rb").read())
        writer.emit("r", "T", rows)
        assert (open(txt, "rb").read(), open(jsonl, "rb").read()) == blobs

    def test_notice_writes_single_row(self, tmp_path):
        writer = reports.ReportWriter(str(tmp_path))
        _, jsonl = writer.notice("gain", "Gain", "no baselines supplied")
        rows = [json.loads(line) for line in open(jsonl)]
        assert rows == [{"notice": "no baselines supplied"}]

    def test_creates_missing_directory(self, tmp_path):
        nested = tmp_path / "deep" / "dir"
        writer = reports.ReportWriter(str(nested))
        writer.emit("x", "T", [])
        assert (nested / "x.txt").exists()


class TestRowBuilders:
    def test_metric_table_rows(self):
        rows = reports.metric_table_rows({"rouge1": 0.5, "rouge2": 0.25})
        assert rows == [
            {"metric": "rouge1", "score": "50.00"},
            {"metric": "rouge2", "score": "25.00"},
        ]

    def test_gain_rows_append_summary_line(self):
        rows = reports.gain_rows({"r": 0.5}, {"r": 0.4}, 25.0)
        assert rows[-1] == {"metric": "mean_relative_gain_pct", "value": "25.00"}
        assert rows[0]["system"] == "50.00"
        assert rows[0]["best_baseline"] == "40.00"

    def test_recall_rows_zip_all_curves(self):
        curve = RecallCurve(
            thresholds=(1, 2),
            model=(0.5, 1.0),
            random=(0.25, 0.5),
            base_order=(0.4, 0.8),
        )
        rows = reports.recall_rows(curve)
        assert rows[0] == {
            "k": 1,
            "model": "50.00",
            "random": "25.00",
            "base_order": "40.00",
        }
        assert len(rows) == 2

    def test_significance_rows_sort_method_columns(self):
        report = {
            "rouge1": MetricSignificance(
                p_values={"dbs": 0.2, "beam": 0.01}, significant=False
            )
        }
        rows = reports.significance_rows(report, 0.05)
        assert list(rows[0]) == ["metric", "alpha", "p_beam", "p_dbs", "significant"]
        assert rows[0]["significant"] is False

    def test_overlap_rows(self):
        rows = reports.overlap_rows(
            OverlapStats(frac_picks_base=0.25, frac_picks_best=0.5)
        )
        assert rows == [{"picks_base_pct": "25.00", "picks_best_pct": "50.00"}]

    def test_novelty_rows_cover_each_system_and_order(self):
        report = NoveltyReport(
            n_values=(1, 2),
            mean_fractions={1: 0.1, 2: float("nan")},
            skipped={1: 0, 2: 3},
            total=3,
        )
        rows = reports.novelty_rows({"system": report})
        assert rows[0]["novel_pct"] == "10.00"
        assert rows[1]["novel_pct"] == "nan"
        assert rows[1]["skipped"] == 3

    def test_utilization_rows_four_decimals(self):
        matrix = np.array([[0.125, 0.875]])
        rows = reports.utilization_rows(matrix, ["rouge1"])
        assert rows == [{"metric": "rouge1", "expert0": "0.1250", "expert1": "0.8750"}]

    def test_subsample_rows_one_per_k(self):
        curve = SubsampleCurve(ks=(1, 3), values={"rouge1": [0.2, 0.4]})
        rows = reports.subsample_rows(curve)
        assert rows == [
            {"k": 1, "rouge1": "20.00"},
            {"k": 3, "rouge1": "40.00"},
        ]

    def test_correlation_rows_carry_full_matrix(self):
        matrix = np.array([[1.0, -0.5], [-0.5, 1.0]])
        rows = reports.correlation_rows(matrix, ["a", "b"])
        assert rows[0] == {"metric": "a", "a": "1.0000", "b": "-0.5000"}
        assert rows[1]["a"] == "-0.5000"
