"""Scikit-learn style estimator facade over the attention ranker.

X is a list of RankingInstance; y is optional (labels may live on the
instances).  The wrapper exists so the model composes with standard
tooling (get_params/set_params, cloning, grid search over hyperparameters).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import QaError
from .ranker import RankerConfig, RankingInstance, predict, train


def check_instances(X, require_labels: bool = False) -> list[RankingInstance]:
    instances = list(X)
    if not instances:
        raise QaError("X must contain at least one instance")
    for inst in instances:
        if not isinstance(inst, RankingInstance):
            raise QaError(f"expected RankingInstance, got {type(inst).__name__}")
        if require_labels and inst.answer_index is None:
            raise QaError(f"question {inst.question_id!r} is unlabeled")
    return instances


def _with_labels(instances, y) -> list[RankingInstance]:
    if y is None:
        return instances
    if len(y) != len(instances):
        raise QaError(f"len(y)={len(y)} does not match len(X)={len(instances)}")
    return [
        RankingInstance(inst.question_id, inst.matrices, int(label))
        for inst, label in zip(instances, y)
    ]


class AttentiveRankerClassifier(BaseEstimator):
    """Answer classifier with attention-based document ranking as a side product."""

    def __init__(self, k_disc=3, proj_dim=32, key_dim=16, value_dim=16,
                 hidden_dim=32, n_max=40, epochs=50, batch_size=128,
                 restarts=5, seed=0, lr=1e-3, validation_fraction=0.2):
        self.k_disc = k_disc
        self.proj_dim = proj_dim
        self.key_dim = key_dim
        self.value_dim = value_dim
        self.hidden_dim = hidden_dim
        self.n_max = n_max
        self.epochs = epochs
        self.batch_size = batch_size
        self.restarts = restarts
        self.seed = seed
        self.lr = lr
        self.validation_fraction = validation_fraction

    def _config(self) -> RankerConfig:
        return RankerConfig(
            k_disc=self.k_disc, proj_dim=self.proj_dim, key_dim=self.key_dim,
            value_dim=self.value_dim, hidden_dim=self.hidden_dim,
            n_max=self.n_max, epochs=self.epochs, batch_size=self.batch_size,
            restarts=self.restarts, seed=self.seed, lr=self.lr,
        )

    def fit(self, X, y=None, dev=None):
        """Train on X; dev defaults to a seeded tail split of X."""
        instances = _with_labels(check_instances(X), y)
        if dev is None:
            rng = np.random.default_rng(self.seed)
            order = rng.permutation(len(instances))
            n_dev = max(1, int(len(instances) * self.validation_fraction))
            dev = [instances[i] for i in order[:n_dev]]
            instances = [instances[i] for i in order[n_dev:]]
        result = train(instances, dev, self._config())
        self.params_ = result.params
        self.config_ = result.config
        self.train_result_ = result
        return self

    def predict_proba(self, X):
        check_instances(X)
        self._check_fitted()
        return [predict(inst, self.params_).probabilities for inst in X]

    def predict(self, X):
        check_instances(X)
        self._check_fitted()
        return np.array(
            [predict(inst, self.params_).predicted_index for inst in X]
        )

    def score(self, X, y=None):
        instances = _with_labels(check_instances(X), y)
        self._check_fitted()
        predictions = self.predict(instances)
        labels = np.array([inst.answer_index for inst in instances])
        if any(label is None for label in labels):
            raise QaError("score() needs labels on every instance")
        return float(np.mean(predictions == labels))

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise QaError("estimator is not fitted; call fit() first")
