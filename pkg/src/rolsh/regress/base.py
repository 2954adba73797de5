from __future__ import annotations

import time
from enum import Enum
from typing import ClassVar

import numpy as np

from ..errors import ConfigError, DimensionMismatch, NotFittedError


class RegressorKind(str, Enum):
    LINEAR = "linear"
    RANSAC = "ransac"
    RIDGE = "ridge"
    LASSO = "lasso"
    DECISION_TREE = "decision_tree"
    GRADIENT_BOOSTING = "gradient_boosting"
    BAYESIAN_RIDGE = "bayesian_ridge"
    ELASTIC_NET = "elastic_net"
    SVR = "svr"
    MLP = "mlp"


def check_xy(X, y=None, *, min_samples: int = 2):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != len(X):
        raise DimensionMismatch(f"X has {len(X)} rows but y has {len(y)}")
    if len(y) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    return X, y


def standardize_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


class Regressor:
    """Shared fit/predict contract.

    Subclasses set ``kind`` and ``defaults`` and implement ``_fit``,
    ``_predict``, ``_state`` and ``_restore``.  ``_state`` returns the fitted
    parameters as a dict of numpy arrays, which is all serialization needs.
    """

    kind: ClassVar[RegressorKind]
    defaults: ClassVar[dict] = {}
    standardizes: ClassVar[bool] = False

    def __init__(self, **config):
        unknown = set(config) - set(self.defaults)
        if unknown:
            raise ConfigError(f"{self.kind.value}: unknown options {sorted(unknown)}")
        self.config = {**self.defaults, **config}
        self.is_fitted = False
        self.converged = True
        self.train_time_ms = 0.0
        self.n_features: int | None = None

    def __repr__(self):
        opts = ", ".join(f"{k}={v!r}" for k, v in self.config.items() if v != self.defaults.get(k))
        return f"{type(self).__name__}({opts})"

    def fit(self, X, y, seed: int = 0):
        X, y = check_xy(X, y)
        t0 = time.perf_counter()
        self.converged = True
        self._fit(X, y, np.random.default_rng(seed))
        self.train_time_ms = (time.perf_counter() - t0) * 1e3
        self.n_features = X.shape[1]
        self.is_fitted = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        X = check_xy(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return self._predict(X)

    @property
    def flags(self) -> tuple[str, ...]:
        out = []
        if self.standardizes:
            out.append("standardized")
        if not self.converged:
            out.append("not_converged")
        return tuple(out)

    def _fit(self, X, y, rng):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError

    def _state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _restore(self, state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


class LinearModel(Regressor):
    """Base for models that predict ``X @ coef + intercept``."""

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_

    def _state(self):
        return {"coef": self.coef_, "intercept": np.float64(self.intercept_)}

    def _restore(self, state):
        self.coef_ = state["coef"]
        self.intercept_ = float(state["intercept"])
