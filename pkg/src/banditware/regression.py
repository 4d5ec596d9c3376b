"""Per-arm linear runtime models: least-squares fitting, prediction, metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import FeatureVector
from .exceptions import EmptyData, InconsistentFeatures, NonFiniteValue, ZeroVariance

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True)
class LinearModel:
    """Runtime model ``w . x + b`` for one hardware configuration."""

    weights: tuple
    bias: float
    n_observations: int
    feature_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "bias", float(self.bias))
        if len(self.weights) != len(self.feature_names):
            raise InconsistentFeatures(
                f"{len(self.weights)} weights for {len(self.feature_names)} features"
            )
        if not all(math.isfinite(w) for w in self.weights) or not math.isfinite(self.bias):
            raise NonFiniteValue("model coefficients must be finite")

    @classmethod
    def zero(cls, feature_names: Sequence[str]) -> "LinearModel":
        return cls((0.0,) * len(feature_names), 0.0, 0, tuple(feature_names))

    def predict(self, x: FeatureVector) -> float:
        return predict(self, x)

    def predict_array(self, X: np.ndarray) -> np.ndarray:
        """Vectorized prediction for rows of ``X`` already in feature order."""
        return np.asarray(X, dtype=float) @ np.asarray(self.weights) + self.bias


def solve_least_squares(X, y, ridge_lambda=DEFAULT_RIDGE):
    """Return ``(weights, bias)`` minimizing ``|y - Xw - b|^2 + lambda |w|^2``.

    The bias is not penalized, so it is eliminated by centering. The centered
    problem is solved through its SVD: singular values at rounding level are
    treated as exact zeros, so rank-deficient designs get the minimum-norm
    weights instead of rounding noise amplified by ``1 / lambda``. With
    ``ridge_lambda == 0`` this is the plain pseudo-inverse solution.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyData("cannot fit a model to zero observations")
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be non-negative")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    w = np.zeros(X.shape[1])
    if s.size and s[0] > 0:
        keep = s > max(Xc.shape) * np.finfo(float).eps * s[0]
        sk = s[keep]
        coef = sk / (sk * sk + ridge_lambda) * (U[:, keep].T @ (y - y_mean))
        w = Vt[keep].T @ coef
    return w, float(y_mean - x_mean @ w)


def fit_least_squares(data, ridge_lambda: float = DEFAULT_RIDGE) -> LinearModel:
    """Fit a :class:`LinearModel` to ``(FeatureVector, runtime)`` pairs."""
    data = list(data)
    if not data:
        raise EmptyData("cannot fit a model to zero observations")
    names = data[0][0].feature_names
    for x, _ in data:
        if x.feature_names != names:
            raise InconsistentFeatures(
                f"mixed feature names: {x.feature_names} vs {names}"
            )
    X = np.array([x.values for x, _ in data], dtype=float)
    y = np.array([r for _, r in data], dtype=float)
    w, b = solve_least_squares(X, y, ridge_lambda)
    return LinearModel(tuple(w), b, len(data), names)


def predict(model: LinearModel, x: FeatureVector) -> float:
    if x.feature_names != model.feature_names:
        raise InconsistentFeatures(
            f"features {x.feature_names} do not match model features {model.feature_names}"
        )
    return float(np.dot(model.weights, x.values) + model.bias)


def _split_pairs(pairs):
    pairs = list(pairs)
    if not pairs:
        raise EmptyData("no (predicted, actual) pairs")
    arr = np.asarray(pairs, dtype=float)
    return arr[:, 0], arr[:, 1]


def rmse(pairs) -> float:
    predicted, actual = _split_pairs(pairs)
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))


def r_squared(pairs) -> float:
    predicted, actual = _split_pairs(pairs)
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0:
        raise ZeroVariance("all actual values are identical; R^2 is undefined")
    ss_res = float(np.sum((actual - predicted) ** 2))
    return 1.0 - ss_res / ss_tot


class LinearRuntimeRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`solve_least_squares`.

    Parameters
    ----------
    ridge_lambda : float, default=1e-8
        Penalty on the weights (never on the intercept).
    """

    def __init__(self, ridge_lambda=DEFAULT_RIDGE):
        self.ridge_lambda = ridge_lambda

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        w, b = solve_least_squares(X, y, self.ridge_lambda)
        self.coef_ = w
        self.intercept_ = b
        self.n_features_in_ = X.shape[1]
        self.n_observations_ = X.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InconsistentFeatures(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X @ self.coef_ + self.intercept_

    def to_model(self, feature_names=None) -> LinearModel:
        check_is_fitted(self, "coef_")
        if feature_names is None:
            feature_names = tuple(f"x{i}" for i in range(self.n_features_in_))
        return LinearModel(tuple(self.coef_), self.intercept_, self.n_observations_, tuple(feature_names))
