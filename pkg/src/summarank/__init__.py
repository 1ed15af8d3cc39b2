"""summarank: learn to pick the best summary out of a candidate pool.

A second-stage re-ranker for abstractive summarization: given several
machine-generated candidate summaries per document, a multi-task
mixture-of-experts classifier scores each candidate's chance of being the
best under each evaluation metric, and the candidate with the highest
summed probability wins.  The package also ships the surrounding desk-scale
toolkit: native ROUGE scoring, dataset ingestion, lexical features,
training with half-split hygiene, and a full evaluation report bundle.

The command line lives under ``summarank`` (see ``summarank --help``);
the same functionality is importable from the submodules re-exported here.
"""

from .candidates import (
    Candidate,
    CandidateExample,
    Dataset,
    half_split,
    label_pool,
    load_dataset,
    merge_pools,
    sample_training_candidates,
    save_dataset,
)
from .errors import (
    DatasetFormatError,
    NumericError,
    PoolError,
    SummarankError,
    ValidationError,
)
from .estimator import MoeReranker
from .evaluation import (
    RankingOutcome,
    expert_utilization,
    metric_correlation_report,
    novelty_report,
    oracle_scores,
    overlap_stats,
    paired_t_test,
    random_baseline_recall,
    recall_at_k,
    rerank,
    rerank_dataset,
    significance_report,
    subsample_curve,
)
from .features import FeatureConfig, featurize_dataset, load_precomputed
from .metrics import (
    NATIVE_METRICS,
    MetricRegistry,
    best_baselines,
    default_registry,
    mean_relative_gain,
    native_scores,
    register_external_metric,
    rouge_l,
    rouge_n,
)
from .model import ModelConfig, init_model, load_model, save_model
from .textproc import porter_stem, tokenize
from .training import TrainConfig, run_half_split_protocol, train

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Candidate",
    "CandidateExample",
    "Dataset",
    "half_split",
    "label_pool",
    "load_dataset",
    "merge_pools",
    "sample_training_candidates",
    "save_dataset",
    "DatasetFormatError",
    "NumericError",
    "PoolError",
    "SummarankError",
    "ValidationError",
    "MoeReranker",
    "RankingOutcome",
    "expert_utilization",
    "metric_correlation_report",
    "novelty_report",
    "oracle_scores",
    "overlap_stats",
    "paired_t_test",
    "random_baseline_recall",
    "recall_at_k",
    "rerank",
    "rerank_dataset",
    "significance_report",
    "subsample_curve",
    "FeatureConfig",
    "featurize_dataset",
    "load_precomputed",
    "NATIVE_METRICS",
    "MetricRegistry",
    "best_baselines",
    "default_registry",
    "mean_relative_gain",
    "native_scores",
    "register_external_metric",
    "rouge_l",
    "rouge_n",
    "ModelConfig",
    "init_model",
    "load_model",
    "save_model",
    "porter_stem",
    "tokenize",
    "TrainConfig",
    "run_half_split_protocol",
    "train",
]
