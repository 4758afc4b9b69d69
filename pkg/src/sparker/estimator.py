"""Scikit-learn style front end for the detector.

The estimator consumes a single labeled design matrix (label 0 = reference
sample, label 1 = inspected sample), trains the annealed kernel ensemble,
and exposes the fitted log-density ratio through ``decision_function``, the
anomaly score through ``score_samples``, and the per-kernel decomposition
through ``transform``, so it composes with sklearn pipelines and model
selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import as_points
from .kernels import components_batch, evaluate_batch, scores_batch
from .losses import np_loss, test_statistic
from .points import data_set, reference_set
from .training import TrainConfig, init_model, train

__all__ = ["SparkerDetector"]


class SparkerDetector(TransformerMixin, BaseEstimator):
    """Two-sample anomaly detector based on competing local kernels.

    Parameters
    ----------
    n_kernels : int
        Ensemble size (kept much smaller than the sample size).
    n_steps : int
        Gradient-descent steps over the annealing schedule.
    n_checkpoints : int
        Intermediate widths stored during annealing.
    learning_rate, l2, clip_bound : float
        Optimizer settings; ``clip_bound`` bounds kernel amplitudes.
    loss : {"np", "bce", "mse"}
        Training objective.
    softmax : bool
        Enable the competitive activation.
    sigma_initial, sigma_final : float or None
        Annealing range; None derives both from pairwise-distance quantiles.
    reference_weight : float or None
        Weight balancing the reference sample; None uses the size ratio.
    record_trajectory : bool
        Keep parameter snapshots every ``trajectory_stride`` steps.
    random_state : int
        Seed for kernel-location initialization.

    Attributes
    ----------
    model_ : fitted ensemble at the final width
    checkpoints_ : list of fitted ensembles, one per checkpoint width
    schedule_ : resolved annealing schedule
    loss_history_ : objective value per step
    test_statistic_ : likelihood-ratio statistic of the final model
    """

    def __init__(self, n_kernels=5, n_steps=20_000, n_checkpoints=4,
                 learning_rate=1e-2, l2=0.0, clip_bound=100.0, loss="np",
                 softmax=True, sigma_initial=None, sigma_final=None,
                 reference_weight=None, record_trajectory=False,
                 trajectory_stride=100, random_state=0):
        self.n_kernels = n_kernels
        self.n_steps = n_steps
        self.n_checkpoints = n_checkpoints
        self.learning_rate = learning_rate
        self.l2 = l2
        self.clip_bound = clip_bound
        self.loss = loss
        self.softmax = softmax
        self.sigma_initial = sigma_initial
        self.sigma_final = sigma_final
        self.reference_weight = reference_weight
        self.record_trajectory = record_trajectory
        self.trajectory_stride = trajectory_stride
        self.random_state = random_state

    def _split(self, X, y):
        X = as_points(X, "X")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be a label per row of X")
        labels = set(np.unique(y).tolist())
        if not labels <= {0, 1} or len(labels) != 2:
            raise ValueError(
                "y must contain both labels: 0 (reference) and 1 (inspected)"
            )
        mask = y == 1
        w = self.reference_weight
        if w is None:
            w = mask.sum() / (~mask).sum()
        return reference_set(X[~mask], weight=w), data_set(X[mask])

    def fit(self, X, y):
        """Train on the pooled sample with reference/inspected labels."""
        reference, data = self._split(X, y)
        model, schedule = init_model(
            reference, data, self.n_kernels, rng_seed=self.random_state,
            total_steps=self.n_steps, n_checkpoints=self.n_checkpoints,
            clip_bound=self.clip_bound, softmax=self.softmax,
            sigma_initial=self.sigma_initial, sigma_final=self.sigma_final,
        )
        config = TrainConfig(
            learning_rate=self.learning_rate,
            l2_coefficient=self.l2,
            clip_bound=self.clip_bound,
            loss_kind=self.loss,
            softmax_enabled=self.softmax,
            record_trajectory=self.record_trajectory,
            trajectory_stride=self.trajectory_stride,
            rng_seed=self.random_state,
        )
        out = train(reference, data, config, schedule, initial_model=model)
        self.model_ = out.final_model
        self.checkpoints_ = out.checkpoints
        self.schedule_ = schedule
        self.loss_history_ = out.loss_history
        self.trajectory_ = out.trajectory
        self.test_statistic_ = test_statistic(np_loss(out.final_model,
                                                      reference, data))
        self.n_features_in_ = reference.dim
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this SparkerDetector instance is not fitted yet"
            )

    def _check_X(self, X):
        self._check_fitted()
        X = as_points(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X

    def _model_at(self, checkpoint):
        if checkpoint is None:
            return self.model_
        return self.checkpoints_[checkpoint]

    def decision_function(self, X, checkpoint: int | None = None):
        """Fitted log-density ratio at each row of X.

        ``checkpoint`` selects an intermediate annealing width (index into
        ``checkpoints_``); None evaluates the final, narrowest model.
        """
        return evaluate_batch(self._check_X(X), self._model_at(checkpoint))

    def score_samples(self, X, checkpoint: int | None = None):
        """Anomaly score in (0, 1): logistic of the decision function."""
        return scores_batch(self._check_X(X), self._model_at(checkpoint))

    def predict(self, X, threshold: float = 0.5,
                checkpoint: int | None = None):
        """Binary anomaly labels by thresholding the anomaly score."""
        return (self.score_samples(X, checkpoint) >= threshold).astype(int)

    def transform(self, X, checkpoint: int | None = None):
        """Per-kernel activation features, shape (n_samples, n_kernels)."""
        return components_batch(self._check_X(X), self._model_at(checkpoint))
