"""Inference and measurement: reranking, oracle scores, tie-aware recall,
paired significance tests, overlap, novelty, expert utilization, and
candidate-subsampling curves.

Everything here is read-only over the model and the dataset, so every
function is deterministic given its inputs (plus an explicit seed where
sampling is involved).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .candidates import Candidate, CandidateExample, Dataset, merge_pools, score_of
from .errors import PoolError, ValidationError
from .features import features_matrix
from .metrics import normalize_pool_scores, pearson
from .model import RerankerModel, _sigmoid, forward_batch
from .textproc import (
    NOVELTY_TOKENIZER,
    UndefinedNoveltyError,
    novel_ngram_fraction,
    tokenize,
)

__all__ = [
    "RankingOutcome",
    "RecallCurve",
    "OverlapStats",
    "MetricSignificance",
    "NoveltyReport",
    "SubsampleCurve",
    "rerank",
    "rerank_dataset",
    "oracle_scores",
    "random_baseline_recall",
    "recall_at_k",
    "regularized_incomplete_beta",
    "paired_t_test",
    "significance_report",
    "overlap_stats",
    "subsample_curve",
    "expert_utilization",
    "metric_correlation_report",
    "novelty_report",
    "summed_normalized_keys",
    "best_candidate_set",
]


# ---------------------------------------------------------------------------
# Reranking
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RankingOutcome:
    """Result of reranking one example's candidate pool.

    ``order`` holds pool indices sorted by decreasing summed probability,
    so ``order[0] == selected_index``.  ``prob_sums`` stays in load order.
    ``gate_weights`` are the selected candidate's per-task gate vectors,
    shape (num_tasks, num_experts).
    """

    example_id: str
    methods: tuple[str, ...]
    order: tuple[int, ...]
    selected_index: int
    selected_scores: dict[str, float]
    prob_sums: tuple[float, ...]
    gate_weights: np.ndarray
    pool_size: int


def rerank(
    model: RerankerModel,
    example: CandidateExample,
    methods: Sequence[str],
    features: np.ndarray | None = None,
) -> RankingOutcome:
    """Rank the example's pool by decreasing sum of predicted per-metric
    probabilities and select the top candidate.

    ``methods`` must be a subset of the method set the model was trained
    on.  Ties in the summed probability resolve to the lower load-order
    index.  ``features`` overrides the candidates' attached vectors when
    given; rows must align with the merged pool order.
    """
    methods = tuple(methods)
    extra = [m for m in methods if m not in model.train_methods]
    if extra:
        raise ValidationError(
            f"methods {extra} were not part of training; the model was trained "
            f"on {list(model.train_methods)}"
        )
    pool = merge_pools(example, methods)
    if features is None:
        X = features_matrix(pool)
    else:
        X = np.asarray(features, dtype=np.float64)
    if X.shape != (len(pool), model.config.input_dim):
        raise ValidationError(
            f"feature matrix shape {X.shape} does not match pool size "
            f"{len(pool)} and model input dim {model.config.input_dim}"
        )
    result = forward_batch(model, X)
    probs = _sigmoid(result.logits)
    sums = probs.sum(axis=1)
    order = tuple(sorted(range(len(pool)), key=lambda i: (-sums[i], i)))
    selected = order[0]
    selected_scores = {
        metric: score_of(pool[selected], metric) for metric in model.metric_names
    }
    return RankingOutcome(
        example_id=example.id,
        methods=methods,
        order=order,
        selected_index=selected,
        selected_scores=selected_scores,
        prob_sums=tuple(float(s) for s in sums),
        gate_weights=result.gates[selected].copy(),
        pool_size=len(pool),
    )


def rerank_dataset(
    model: RerankerModel,
    dataset: Dataset,
    methods: Sequence[str],
) -> list[RankingOutcome]:
    """Rerank every example, preserving dataset order."""
    return [rerank(model, example, methods) for example in dataset]


# ---------------------------------------------------------------------------
# Oracle and best-candidate machinery
# ---------------------------------------------------------------------------


def oracle_scores(
    dataset: Dataset,
    metrics: Sequence[str] | None = None,
    methods: Sequence[str] | None = None,
) -> dict[str, float]:
    """Per-metric mean of the per-example pool maximum, the re-ranker's
    upper bound."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    metrics = tuple(metrics) if metrics is not None else dataset.registry.names
    methods = tuple(methods) if methods is not None else dataset.methods
    totals = {m: 0.0 for m in metrics}
    for example in dataset:
        pool = merge_pools(example, methods)
        for metric in metrics:
            totals[metric] += max(score_of(c, metric) for c in pool)
    return {m: totals[m] / len(dataset) for m in metrics}


def summed_normalized_keys(
    pool: Sequence[Candidate], metrics: Sequence[str]
) -> list[float]:
    """Sum of per-pool min-max-normalized scores, one value per candidate."""
    sums = [0.0] * len(pool)
    for metric in metrics:
        normed = normalize_pool_scores([score_of(c, metric) for c in pool])
        for i, v in enumerate(normed):
            sums[i] += v
    return sums


def best_candidate_set(pool: Sequence[Candidate], metrics: Sequence[str]) -> set[int]:
    """Indices attaining the pool maximum of the summed normalized scores.

    Several candidates frequently tie, so this is a set rather than a
    single index.
    """
    keys = summed_normalized_keys(pool, metrics)
    best = max(keys)
    return {i for i, k in enumerate(keys) if k == best}


# ---------------------------------------------------------------------------
# Recall at k
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecallCurve:
    thresholds: tuple[int, ...]
    model: tuple[float, ...]
    random: tuple[float, ...]
    base_order: tuple[float, ...]


def random_baseline_recall(m: int, m_best: int, k: int) -> float:
    """Probability that a uniformly random ranking places at least one of
    ``m_best`` tied-best candidates (out of ``m``) in the top ``k``."""
    if not 1 <= m_best <= m:
        raise ValidationError(f"need 1 <= m_best <= m, got m_best={m_best}, m={m}")
    if not 1 <= k <= m:
        raise ValidationError(f"need 1 <= k <= m, got k={k}, m={m}")
    total = math.comb(m, m_best)
    missed = math.comb(m - k, m_best) if m - k >= m_best else 0
    return (total - missed) / total


def _check_aligned(outcomes: Sequence[RankingOutcome], dataset: Dataset) -> None:
    if len(outcomes) != len(dataset):
        raise ValidationError(
            f"{len(outcomes)} outcomes for {len(dataset)} examples"
        )
    for outcome, example in zip(outcomes, dataset):
        if outcome.example_id != example.id:
            raise ValidationError(
                f"outcome id {outcome.example_id!r} does not match example "
                f"{example.id!r}; files are misaligned"
            )


def recall_at_k(
    outcomes: Sequence[RankingOutcome],
    dataset: Dataset,
    metric_sum_rule: Callable[[Sequence[Candidate]], Sequence[float]] | None = None,
    K: int | None = None,
) -> RecallCurve:
    """Best-candidate recall curves for the model ranking, the closed-form
    random baseline, and the candidate load order.

    An example counts as recalled at ``k`` when any of the top-k candidates
    belongs to the tied-best set under ``metric_sum_rule`` (default: summed
    per-pool-normalized scores over the dataset's metric set).  Pools
    smaller than ``k`` are always recalled.
    """
    _check_aligned(outcomes, dataset)
    if metric_sum_rule is None:
        names = dataset.registry.names

        def metric_sum_rule(pool: Sequence[Candidate]) -> Sequence[float]:
            return summed_normalized_keys(pool, names)

    per_example = []
    max_m = 0
    for outcome, example in zip(outcomes, dataset):
        pool = merge_pools(example, outcome.methods)
        keys = list(metric_sum_rule(pool))
        if len(keys) != len(pool):
            raise ValidationError("metric_sum_rule returned a wrong-length key list")
        top = max(keys)
        best = {i for i, v in enumerate(keys) if v == top}
        per_example.append((outcome, len(pool), best))
        max_m = max(max_m, len(pool))
    if K is None:
        K = max_m
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")

    thresholds = tuple(range(1, K + 1))
    n = len(per_example)
    model_curve = []
    random_curve = []
    base_curve = []
    for k in thresholds:
        hits_model = 0
        hits_base = 0
        rand_total = 0.0
        for outcome, m, best in per_example:
            kk = min(k, m)
            if any(i in best for i in outcome.order[:kk]):
                hits_model += 1
            if any(i in best for i in range(kk)):
                hits_base += 1
            rand_total += random_baseline_recall(m, len(best), kk)
        model_curve.append(hits_model / n)
        base_curve.append(hits_base / n)
        random_curve.append(rand_total / n)
    return RecallCurve(
        thresholds=thresholds,
        model=tuple(model_curve),
        random=tuple(random_curve),
        base_order=tuple(base_curve),
    )


# ---------------------------------------------------------------------------
# Paired t-test via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_BETA_REL_TOL = 1e-10
_BETA_MAX_ITER = 500


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued-fraction core of the incomplete beta (Lentz's method)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_REL_TOL:
            return h
    raise ValueError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Two-sided p-value of the paired t-test between aligned score lists.

    Degenerate cases follow the limits of the statistic: all-zero
    differences give p = 1.0, and equal nonzero differences (zero variance
    around a nonzero mean) give p = 0.0.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(
            f"paired score lists must be equal-length vectors, got {a.shape} "
            f"and {b.shape}"
        )
    n = a.size
    if n < 2:
        raise ValidationError("paired t-test needs at least 2 pairs")
    d = a - b
    if np.all(d == 0.0):
        return 1.0
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return 0.0
    t = float(d.mean()) / (sd / math.sqrt(n))
    df = n - 1
    x = df / (df + t * t)
    p = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return float(min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class MetricSignificance:
    p_values: dict[str, float]
    significant: bool


def significance_report(
    system_scores: Mapping[str, Sequence[float]],
    baseline_scores: Mapping[str, Mapping[str, Sequence[float]]],
    alpha: float = 0.05,
) -> dict[str, MetricSignificance]:
    """Per-metric significance of the system against every baseline method.

    A metric is flagged significant only when the paired t-test p-value is
    below ``alpha`` against ALL baseline methods.
    """
    if not baseline_scores:
        raise ValidationError("significance_report needs at least one baseline")
    report: dict[str, MetricSignificance] = {}
    for metric, sys_values in system_scores.items():
        p_values: dict[str, float] = {}
        for method, per_metric in baseline_scores.items():
            if metric not in per_metric:
                raise ValidationError(
                    f"baseline {method!r} has no scores for metric {metric!r}"
                )
            base_values = per_metric[metric]
            if len(base_values) != len(sys_values):
                raise ValidationError(
                    f"baseline {method!r} metric {metric!r}: {len(base_values)} "
                    f"values vs {len(sys_values)} system values"
                )
            p_values[method] = paired_t_test(sys_values, base_values)
        report[metric] = MetricSignificance(
            p_values=p_values,
            significant=all(p < alpha for p in p_values.values()),
        )
    return report


# ---------------------------------------------------------------------------
# Overlap with base and best candidates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlapStats:
    frac_picks_base: float
    frac_picks_best: float


def overlap_stats(
    outcomes: Sequence[RankingOutcome],
    dataset: Dataset,
    base_method: str | None = None,
) -> OverlapStats:
    """How often the selection equals the base candidate (load-order-first
    of ``base_method``, default the first method in each outcome's set) and
    how often it lands in the tied-best set."""
    _check_aligned(outcomes, dataset)
    if not outcomes:
        raise ValidationError("no outcomes to analyze")
    picks_base = 0
    picks_best = 0
    for outcome, example in zip(outcomes, dataset):
        pool = merge_pools(example, outcome.methods)
        method = base_method if base_method is not None else outcome.methods[0]
        base_idx = next(
            (i for i, c in enumerate(pool) if c.method == method), None
        )
        if base_idx is None:
            raise PoolError(
                f"example {example.id!r} has no candidates for base method "
                f"{method!r}"
            )
        if outcome.selected_index == base_idx:
            picks_base += 1
        if outcome.selected_index in best_candidate_set(pool, dataset.registry.names):
            picks_best += 1
    n = len(outcomes)
    return OverlapStats(frac_picks_base=picks_base / n, frac_picks_best=picks_best / n)


# ---------------------------------------------------------------------------
# Subsampling curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsampleCurve:
    ks: tuple[int, ...]
    values: dict[str, tuple[float, ...]]


def subsample_curve(
    model: RerankerModel,
    dataset: Dataset,
    ks: Sequence[int],
    trials: int,
    seed: int,
    methods: Sequence[str] | None = None,
) -> SubsampleCurve:
    """Mean selected metric value when reranking uniformly sampled
    k-candidate subsets, per metric and per k.

    With k equal to the pool size the subset is the whole pool, so the
    value matches the full rerank result regardless of ``trials``.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    ks = tuple(int(k) for k in ks)
    if any(k < 1 for k in ks):
        raise ValidationError(f"subsample sizes must be >= 1, got {ks}")
    methods = tuple(methods) if methods is not None else model.train_methods
    rng = np.random.default_rng(seed)
    metrics = model.metric_names

    pools = []
    for example in dataset:
        pool = merge_pools(example, methods)
        X = features_matrix(pool)
        if X.shape[1] != model.config.input_dim:
            raise ValidationError(
                f"feature dim {X.shape[1]} does not match model input dim "
                f"{model.config.input_dim}"
            )
        result = forward_batch(model, X)
        sums = _sigmoid(result.logits).sum(axis=1)
        scores = {m: [score_of(c, m) for c in pool] for m in metrics}
        pools.append((example.id, len(pool), sums, scores))
        bad = [k for k in ks if k > len(pool)]
        if bad:
            raise ValidationError(
                f"k={bad[0]} exceeds the pool size {len(pool)} of example "
                f"{example.id!r}"
            )

    totals = {m: [0.0] * len(ks) for m in metrics}
    counts = [0] * len(ks)
    for _, m_pool, sums, scores in pools:
        for j, k in enumerate(ks):
            if k == m_pool:
                chosen = int(min(range(m_pool), key=lambda i: (-sums[i], i)))
                for metric in metrics:
                    totals[metric][j] += trials * scores[metric][chosen]
                counts[j] += trials
                continue
            for _ in range(trials):
                idx = np.sort(rng.choice(m_pool, size=k, replace=False))
                chosen = int(min(idx, key=lambda i: (-sums[i], i)))
                for metric in metrics:
                    totals[metric][j] += scores[metric][chosen]
                counts[j] += 1
    values = {
        metric: tuple(totals[metric][j] / counts[j] for j in range(len(ks)))
        for metric in metrics
    }
    return SubsampleCurve(ks=ks, values=values)


# ---------------------------------------------------------------------------
# Expert utilization and metric correlation
# ---------------------------------------------------------------------------


def expert_utilization(
    model: RerankerModel,
    dataset: Dataset,
    methods: Sequence[str] | None = None,
) -> np.ndarray:
    """Mean gate weight per (task, expert) over every candidate in the
    dataset.  Rows are probability vectors."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    methods = tuple(methods) if methods is not None else model.train_methods
    total = np.zeros((model.config.num_tasks, model.config.num_experts))
    count = 0
    for example in dataset:
        pool = merge_pools(example, methods)
        X = features_matrix(pool)
        result = forward_batch(model, X)
        total += result.gates.sum(axis=0)
        count += len(pool)
    return total / count


def metric_correlation_report(
    dataset: Dataset,
    metrics: Sequence[str] | None = None,
    method: str | None = None,
) -> np.ndarray:
    """Symmetric Pearson correlation matrix over candidate-level scores.

    ``method`` restricts the correlation to one decoding method's
    candidates; by default every candidate counts.  A constant score
    column raises :class:`UndefinedCorrelationError`.
    """
    metrics = tuple(metrics) if metrics is not None else dataset.registry.names
    columns: dict[str, list[float]] = {m: [] for m in metrics}
    for example in dataset:
        for candidate in example.candidates:
            if method is not None and candidate.method != method:
                continue
            for metric in metrics:
                columns[metric].append(score_of(candidate, metric))
    n = len(columns[metrics[0]])
    if n < 2:
        raise ValidationError(
            f"need at least 2 scored candidates, found {n}"
            + (f" for method {method!r}" if method is not None else "")
        )
    size = len(metrics)
    matrix = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            r = pearson(columns[metrics[i]], columns[metrics[j]])
            matrix[i, j] = r
            matrix[j, i] = r
    return matrix


# ---------------------------------------------------------------------------
# Novelty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoveltyReport:
    n_values: tuple[int, ...]
    mean_fractions: dict[int, float]
    skipped: dict[int, int]
    total: int


def novelty_report(
    summaries: Sequence[str],
    sources: Sequence[str],
    n_values: Sequence[int] = (1, 2, 3, 4),
) -> NoveltyReport:
    """Mean fraction of novel n-grams of each summary against its source.

    Summaries shorter than ``n`` tokens cannot contribute and are skipped;
    the skip count per ``n`` is part of the report.  Stemming is off here:
    novelty is about surface forms.
    """
    if len(summaries) != len(sources):
        raise ValidationError(
            f"{len(summaries)} summaries vs {len(sources)} sources"
        )
    if not summaries:
        raise ValidationError("no summaries to analyze")
    n_values = tuple(int(n) for n in n_values)
    summary_tokens = [tokenize(s, NOVELTY_TOKENIZER) for s in summaries]
    source_tokens = [tokenize(s, NOVELTY_TOKENIZER) for s in sources]
    fractions: dict[int, float] = {}
    skipped: dict[int, int] = {}
    for n in n_values:
        kept: list[float] = []
        skips = 0
        for summ, src in zip(summary_tokens, source_tokens):
            try:
                kept.append(novel_ngram_fraction(summ, src, n))
            except UndefinedNoveltyError:
                skips += 1
        fractions[n] = sum(kept) / len(kept) if kept else math.nan
        skipped[n] = skips
    return NoveltyReport(
        n_values=n_values,
        mean_fractions=fractions,
        skipped=skipped,
        total=len(summaries),
    )
