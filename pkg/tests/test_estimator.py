import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from summarank.errors import ValidationError
from summarank.estimator import MoeReranker


def separable_problem(n=200, seed=0):
    """Two tasks, both perfectly determined by the sign of one feature."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    y = (X[:, 0] > 0).astype(float)
    Y = np.column_stack([y, y])
    return X, Y


def small_estimator(**overrides):
    params = dict(
        bottom_sizes=(8, 8),
        expert_sizes=(8, 4),
        epochs=4,
        batch_size=16,
        peak_lr=0.02,
        seed=0,
    )
    params.update(overrides)
    return MoeReranker(**params)


class TestSklearnContract:
    def test_get_params_round_trip(self):
        est = small_estimator(num_experts=3, expert_dropout=0.25)
        params = est.get_params()
        assert params["num_experts"] == 3
        assert params["expert_dropout"] == 0.25
        rebuilt = MoeReranker(**params)
        assert rebuilt.get_params() == params

    def test_clone_keeps_parameters(self):
        est = small_estimator(seed=5)
        assert clone(est).get_params() == est.get_params()

    def test_set_params_returns_self(self):
        est = small_estimator()
        assert est.set_params(epochs=1) is est
        assert est.epochs == 1

    def test_unfitted_predict_raises_not_fitted(self):
        with pytest.raises(NotFittedError):
            small_estimator().predict(np.zeros((2, 4)))

    def test_fit_sets_standard_attributes(self):
        X, Y = separable_problem(40)
        est = small_estimator(epochs=1).fit(X, Y)
        assert est.n_features_in_ == 4
        assert est.n_tasks_ == 2
        assert est.model_.config.input_dim == 4


class TestFitPredict:
    def test_learns_a_separable_rule(self):
        X, Y = separable_problem(300, seed=1)
        est = small_estimator(epochs=10).fit(X, Y)
        X_new, Y_new = separable_problem(100, seed=2)
        assert est.score(X_new, Y_new) >= 0.95

    def test_predict_proba_shape_and_range(self):
        X, Y = separable_problem(60)
        est = small_estimator(epochs=1).fit(X, Y)
        probs = est.predict_proba(X[:7])
        assert probs.shape == (7, 2)
        assert np.all((probs > 0.0) & (probs < 1.0))

    def test_predict_thresholds_proba(self):
        X, Y = separable_problem(60)
        est = small_estimator(epochs=2).fit(X, Y)
        probs = est.predict_proba(X)
        assert np.array_equal(est.predict(X), (probs > 0.5).astype(int))

    def test_decision_function_matches_proba(self):
        X, Y = separable_problem(50)
        est = small_estimator(epochs=1).fit(X, Y)
        logits = est.decision_function(X[:9])
        assert_allclose(1.0 / (1.0 + np.exp(-logits)), est.predict_proba(X[:9]))

    def test_same_seed_reproduces_parameters(self):
        X, Y = separable_problem(80)
        a = small_estimator(seed=3).fit(X, Y)
        b = small_estimator(seed=3).fit(X, Y)
        for name, value in a.model_.params.items():
            assert np.array_equal(value, b.model_.params[name])

    def test_different_seeds_differ(self):
        X, Y = separable_problem(80)
        a = small_estimator(seed=3, epochs=1).fit(X, Y)
        b = small_estimator(seed=4, epochs=1).fit(X, Y)
        assert any(
            not np.array_equal(value, b.model_.params[name])
            for name, value in a.model_.params.items()
        )

    def test_zero_epochs_keeps_initial_weights_usable(self):
        X, Y = separable_problem(20)
        est = small_estimator(epochs=0).fit(X, Y)
        assert est.predict_proba(X).shape == (20, 2)


class TestValidation:
    def test_rejects_row_count_mismatch(self):
        with pytest.raises(ValidationError, match="rows"):
            small_estimator().fit(np.zeros((4, 3)), np.zeros((5, 2)))

    def test_rejects_non_binary_labels(self):
        with pytest.raises(ValidationError, match="0/1"):
            small_estimator().fit(np.zeros((4, 3)), np.full((4, 2), 0.5))

    def test_rejects_one_dimensional_features(self):
        with pytest.raises(ValidationError, match="2-dimensional"):
            small_estimator().fit(np.zeros(4), np.zeros((4, 2)))

    def test_rejects_non_finite_features(self):
        X = np.zeros((4, 3))
        X[2, 1] = np.nan
        with pytest.raises(ValidationError, match="row 2"):
            small_estimator().fit(X, np.zeros((4, 2)))

    def test_predict_rejects_wrong_width(self):
        X, Y = separable_problem(30)
        est = small_estimator(epochs=1).fit(X, Y)
        with pytest.raises(ValidationError, match="expected 4"):
            est.predict(np.zeros((3, 5)))

    def test_fit_rejects_bad_epochs(self):
        X, Y = separable_problem(10)
        with pytest.raises(ValueError, match="epochs"):
            small_estimator(epochs=-1).fit(X, Y)
