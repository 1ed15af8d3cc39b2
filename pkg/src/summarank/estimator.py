"""Scikit-learn style wrapper around the multi-task re-ranking network.

:class:`MoeReranker` exposes the raw classifier through the familiar
``fit`` / ``predict`` / ``predict_proba`` surface so it composes with
sklearn tooling (``clone``, ``get_params``, grid search).  Rows are
independent candidate feature vectors; columns of ``Y`` are the per-metric
"is this candidate the best in its pool" targets.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import (
    ModelConfig,
    backward,
    forward_batch,
    init_model,
    init_optimizer,
    optimizer_step,
    sample_expert_mask,
    _sigmoid,
)
from .validation import check_feature_matrix, check_training_arrays

__all__ = ["MoeReranker"]


class MoeReranker(BaseEstimator):
    """Multi-task mixture-of-experts binary classifier.

    Parameters mirror the training configuration: a shared two-layer
    bottom, ``num_experts`` two-layer expert networks (default twice the
    number of tasks), per-task softmax gates over the experts, and scalar
    towers producing one logit per task.  Training minimizes the mean
    sigmoid cross-entropy over all tasks with expert dropout, warmup, and
    adaptive moments; everything is deterministic under ``seed``.

    Attributes set by :meth:`fit`: ``model_`` (the fitted network),
    ``n_features_in_``, ``n_tasks_``.
    """

    def __init__(
        self,
        num_experts=None,
        bottom_sizes=(64, 64),
        expert_sizes=(64, 64),
        expert_dropout=0.5,
        epochs=5,
        batch_size=32,
        peak_lr=1e-3,
        warmup_frac=0.05,
        seed=0,
    ):
        self.num_experts = num_experts
        self.bottom_sizes = bottom_sizes
        self.expert_sizes = expert_sizes
        self.expert_dropout = expert_dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.warmup_frac = warmup_frac
        self.seed = seed

    def fit(self, X, Y):
        """Fit the network on feature rows ``X`` (n, d) and binary label
        columns ``Y`` (n, num_tasks)."""
        X, Y = check_training_arrays(X, Y)
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        n, d = X.shape
        config = ModelConfig(
            input_dim=d,
            num_tasks=Y.shape[1],
            bottom_sizes=tuple(self.bottom_sizes),
            expert_sizes=tuple(self.expert_sizes),
            num_experts=self.num_experts,
            expert_dropout=self.expert_dropout,
            seed=self.seed,
        )
        model = init_model(config)
        steps_per_epoch = math.ceil(n / self.batch_size)
        total_steps = max(1, self.epochs * steps_per_epoch)
        state = init_optimizer(model, self.peak_lr, total_steps, self.warmup_frac)
        mask_rng = np.random.default_rng((self.seed, 1))
        for epoch in range(self.epochs):
            order = np.random.default_rng((self.seed, 0, epoch)).permutation(n)
            for start in range(0, n, self.batch_size):
                rows = order[start : start + self.batch_size]
                masks = np.stack(
                    [
                        sample_expert_mask(
                            config.num_experts, config.expert_dropout, mask_rng
                        )
                        for _ in rows
                    ]
                )
                grads, _ = backward(model, X[rows], Y[rows], masks)
                model, state = optimizer_step(model, grads, state)
        self.model_ = model
        self.n_features_in_ = d
        self.n_tasks_ = Y.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Per-task logits, shape (n, num_tasks); dropout off."""
        check_is_fitted(self, "model_")
        X = check_feature_matrix(X, self.n_features_in_)
        return forward_batch(self.model_, X).logits

    def predict_proba(self, X) -> np.ndarray:
        """Per-task best-candidate probabilities, shape (n, num_tasks)."""
        return _sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        """Binary per-task predictions at the 0.5 threshold."""
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def score(self, X, Y) -> float:
        """Mean per-label accuracy across all tasks."""
        check_is_fitted(self, "model_")
        X, Y = check_training_arrays(X, Y)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, the model was fitted with "
                f"{self.n_features_in_}"
            )
        return float(np.mean(self.predict(X) == Y))
