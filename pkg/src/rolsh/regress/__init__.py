"""Ten regression techniques behind one fit/predict contract."""

from __future__ import annotations

import numpy as np

from ..errors import TooFewSamples
from .base import Regressor, RegressorKind
from .coordinate import ElasticNetRegressor, LassoRegressor
from .linear import BayesianRidgeRegressor, LinearRegressor, RansacRegressor, RidgeRegressor
from .mlp import MLPRegressor
from .serialize import load_model, model_from_bytes, model_to_bytes, save_model
from .svr import SVRRegressor
from .tree import DecisionTreeRegressor, GradientBoostingRegressor

REGISTRY: dict[RegressorKind, type[Regressor]] = {
    RegressorKind.LINEAR: LinearRegressor,
    RegressorKind.RANSAC: RansacRegressor,
    RegressorKind.RIDGE: RidgeRegressor,
    RegressorKind.LASSO: LassoRegressor,
    RegressorKind.DECISION_TREE: DecisionTreeRegressor,
    RegressorKind.GRADIENT_BOOSTING: GradientBoostingRegressor,
    RegressorKind.BAYESIAN_RIDGE: BayesianRidgeRegressor,
    RegressorKind.ELASTIC_NET: ElasticNetRegressor,
    RegressorKind.SVR: SVRRegressor,
    RegressorKind.MLP: MLPRegressor,
}


def make(kind, config: dict | None = None) -> Regressor:
    return REGISTRY[RegressorKind(kind)](**(config or {}))


def fit(kind, config: dict | None, X, y, seed: int = 0) -> Regressor:
    return make(kind, config).fit(X, y, seed=seed)


def predict(model: Regressor, X) -> np.ndarray:
    return model.predict(X)


def kfold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``folds`` near-equal parts."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise TooFewSamples(f"{n} samples cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(kind, config, X, y, folds: int = 10, seed: int = 0, *, timing: bool = False):
    """Per-fold MetricSet list; each fold is scored by a model fit on the rest."""
    from ..metrics import MetricSet, time_predictions

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    parts = kfold_indices(len(y), folds, seed)
    out = []
    for i, test in enumerate(parts):
        train = np.sort(np.concatenate(parts[:i] + parts[i + 1 :]))
        model = fit(kind, config, X[train], y[train], seed=seed + i)
        yhat = model.predict(X[test])
        ms = time_predictions(model, X[test]) if timing else 0.0
        out.append(MetricSet.score(y[test], yhat, train_time_ms=model.train_time_ms, predict_time_ms=ms))
    return out


__all__ = [
    "REGISTRY", "Regressor", "RegressorKind", "make", "fit", "predict", "kfold_indices",
    "cross_validate", "save_model", "load_model", "model_to_bytes", "model_from_bytes",
    "LinearRegressor", "RansacRegressor", "RidgeRegressor", "LassoRegressor",
    "DecisionTreeRegressor", "GradientBoostingRegressor", "BayesianRidgeRegressor",
    "ElasticNetRegressor", "SVRRegressor", "MLPRegressor",
]
