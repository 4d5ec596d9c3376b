"""scikit-learn style facade over the functional bandit API."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bandit import BanditConfig, estimate_all, new_bandit, recommend, select_arm, update
from .core import FeatureVector, HardwareConfig
from .exceptions import InconsistentFeatures
from .regression import DEFAULT_RIDGE


class BanditWareRecommender(BaseEstimator):
    """Hardware recommender that learns one linear runtime model per arm.

    ``fit`` replays labelled runs ``(X, runtime, hardware_id)`` through the
    bandit in row order, exactly as if they had been observed online;
    ``partial_fit`` continues from the current state. ``predict`` returns the
    exploit choice per row and never changes the state. ``select`` draws the
    explore/exploit decision for live scheduling.

    Parameters
    ----------
    hardware : sequence of HardwareConfig
        The arms. Required.
    alpha, epsilon0 : float
        Decay factor and initial exploration rate.
    tolerance_ratio, tolerance_seconds : float
        Slack above the fastest estimate within which the cheapest arm wins.
    ridge_lambda : float
        Weight penalty of each arm's least-squares fit.
    feature_names : sequence of str, optional
        Defaults to DataFrame column names, else ``x0, x1, ...``.
    random_state : int or None
        Seed for the exploration draws made by ``select``.
    """

    def __init__(self, hardware=None, alpha=0.99, epsilon0=1.0, tolerance_ratio=0.0,
                 tolerance_seconds=0.0, ridge_lambda=DEFAULT_RIDGE, feature_names=None,
                 random_state=None):
        self.hardware = hardware
        self.alpha = alpha
        self.epsilon0 = epsilon0
        self.tolerance_ratio = tolerance_ratio
        self.tolerance_seconds = tolerance_seconds
        self.ridge_lambda = ridge_lambda
        self.feature_names = feature_names
        self.random_state = random_state

    def _names_for(self, X, n_features):
        if self.feature_names is not None:
            names = tuple(self.feature_names)
        elif hasattr(X, "columns"):
            names = tuple(str(c) for c in X.columns)
        else:
            names = tuple(f"x{i}" for i in range(n_features))
        if len(names) != n_features:
            raise InconsistentFeatures(f"{len(names)} feature names for {n_features} columns")
        return names

    def _init_state(self, X):
        if not self.hardware:
            raise ValueError("hardware must be a non-empty sequence of HardwareConfig")
        hardware = tuple(h if isinstance(h, HardwareConfig) else HardwareConfig(*h) for h in self.hardware)
        config = BanditConfig(self.alpha, self.epsilon0, self.tolerance_ratio, self.tolerance_seconds,
                              self.ridge_lambda)
        names = self._names_for(X, X.shape[1])
        self.state_ = new_bandit(hardware, names, config)
        self.classes_ = np.array(self.state_.hardware_ids, dtype=object)
        self.n_features_in_ = len(names)
        self.feature_names_ = names
        self._rng = np.random.default_rng(self.random_state)

    def _rows(self, X):
        Xa = check_array(X, dtype=float)
        if Xa.shape[1] != self.n_features_in_:
            raise InconsistentFeatures(f"expected {self.n_features_in_} features, got {Xa.shape[1]}")
        return [FeatureVector(row, self.feature_names_) for row in Xa]

    def fit(self, X, y, hardware_ids):
        """Start from a cold bandit and apply every observed run in order."""
        Xa = check_array(X, dtype=float)
        self._init_state(X)
        return self._consume(Xa, y, hardware_ids)

    def partial_fit(self, X, y, hardware_ids):
        if not hasattr(self, "state_"):
            return self.fit(X, y, hardware_ids)
        return self._consume(check_array(X, dtype=float), y, hardware_ids)

    def _consume(self, Xa, y, hardware_ids):
        y = np.asarray(y, dtype=float).ravel()
        hardware_ids = list(hardware_ids)
        if not (len(Xa) == len(y) == len(hardware_ids)):
            raise ValueError("X, y and hardware_ids must have the same length")
        state = self.state_
        for row, r, h in zip(Xa, y, hardware_ids):
            state = update(state, h, FeatureVector(row, self.feature_names_), r)
        self.state_ = state
        return self

    def predict(self, X):
        """Recommended hardware id per row (exploit branch, no randomness)."""
        check_is_fitted(self, "state_")
        return np.array([recommend(self.state_, x) for x in self._rows(X)], dtype=object)

    def predict_runtime(self, X):
        """Estimated runtime of each row on each arm, columns ordered as ``classes_``."""
        check_is_fitted(self, "state_")
        return np.array([estimate_all(self.state_, x) for x in self._rows(X)], dtype=float)

    def select(self, X):
        """Explore/exploit decisions, one per row; the state is not changed."""
        check_is_fitted(self, "state_")
        return [select_arm(self.state_, x, self._rng) for x in self._rows(X)]

    @property
    def epsilon_(self):
        check_is_fitted(self, "state_")
        return self.state_.epsilon
