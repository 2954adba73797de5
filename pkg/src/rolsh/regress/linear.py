"""Least-squares family: OLS, ridge, Bayesian ridge and RANSAC."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ..errors import DegenerateFit
from .base import LinearModel, RegressorKind


def _center(X, y):
    xm = X.mean(axis=0)
    ym = y.mean()
    return X - xm, y - ym, xm, ym


def ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Intercept + coefficients by pivoted-QR least squares (LAPACK gelsy)."""
    Xc, yc, xm, ym = _center(X, y)
    coef = linalg.lstsq(Xc, yc, lapack_driver="gelsy", check_finite=False)[0]
    return coef, float(ym - xm @ coef)


class LinearRegressor(LinearModel):
    kind = RegressorKind.LINEAR

    def _fit(self, X, y, rng):
        self.coef_, self.intercept_ = ols(X, y)


class RidgeRegressor(LinearModel):
    """Closed-form ridge; the intercept is not penalized."""

    kind = RegressorKind.RIDGE
    defaults = {"alpha": 1.0}

    def _fit(self, X, y, rng):
        Xc, yc, xm, ym = _center(X, y)
        A = Xc.T @ Xc
        A[np.diag_indices_from(A)] += self.config["alpha"]
        try:
            self.coef_ = linalg.solve(A, Xc.T @ yc, assume_a="pos")
        except linalg.LinAlgError:
            self.coef_ = linalg.lstsq(A, Xc.T @ yc)[0]
        self.intercept_ = float(ym - xm @ self.coef_)


class BayesianRidgeRegressor(LinearModel):
    """Evidence maximization over the noise precision and weight precision.

    Both precisions carry Gamma(shape, rate) hyperpriors.  With
    ``update_hyper=False`` the initial precisions stay fixed and the posterior
    mean equals ridge with penalty ``lambda_init / alpha_init``.
    """

    kind = RegressorKind.BAYESIAN_RIDGE
    defaults = {
        "max_iter": 300,
        "tol": 1e-3,
        "alpha_1": 1e-6,
        "alpha_2": 1e-6,
        "lambda_1": 1e-6,
        "lambda_2": 1e-6,
        "alpha_init": None,
        "lambda_init": None,
        "update_hyper": True,
    }

    def _fit(self, X, y, rng):
        cfg = self.config
        Xc, yc, xm, ym = _center(X, y)
        n = len(y)
        U, S, Vt = linalg.svd(Xc, full_matrices=False)
        eig = S**2
        Uty = U.T @ yc
        alpha = cfg["alpha_init"] if cfg["alpha_init"] is not None else 1.0 / (np.var(y) + np.finfo(float).eps)
        lam = cfg["lambda_init"] if cfg["lambda_init"] is not None else 1.0

        def posterior_mean(alpha, lam):
            return Vt.T @ (S * Uty / (eig + lam / alpha))

        coef = posterior_mean(alpha, lam)
        if cfg["update_hyper"]:
            self.converged = False
            for it in range(cfg["max_iter"]):
                coef = posterior_mean(alpha, lam)
                resid = yc - Xc @ coef
                sse = float(resid @ resid)
                gamma = float(np.sum(alpha * eig / (lam + alpha * eig)))
                lam = (gamma + 2 * cfg["lambda_1"]) / (float(coef @ coef) + 2 * cfg["lambda_2"])
                alpha = (n - gamma + 2 * cfg["alpha_1"]) / (sse + 2 * cfg["alpha_2"])
                if it and np.sum(np.abs(coef_old - coef)) < cfg["tol"]:
                    self.converged = True
                    break
                coef_old = coef
            coef = posterior_mean(alpha, lam)
        self.alpha_, self.lambda_ = float(alpha), float(lam)
        self.coef_ = coef
        self.intercept_ = float(ym - xm @ coef)

    def _state(self):
        return {**super()._state(), "alpha": np.float64(self.alpha_), "lambda": np.float64(self.lambda_)}

    def _restore(self, state):
        super()._restore(state)
        self.alpha_, self.lambda_ = float(state["alpha"]), float(state["lambda"])


def _r2(y, yhat) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    if ss == 0.0:
        return 0.0
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss


class RansacRegressor(LinearModel):
    """RANSAC around OLS.

    Each trial fits ``min_samples`` random rows (default ``f + 1``); points
    with absolute residual at most ``residual_threshold`` (default: median
    absolute deviation of y) are inliers.  The trial with most inliers wins,
    ties going to the better R^2 on its inliers, and the final model is OLS
    on that consensus set.
    """

    kind = RegressorKind.RANSAC
    defaults = {"max_trials": 100, "min_samples": None, "residual_threshold": None}

    def _fit(self, X, y, rng):
        n, f = X.shape
        size = self.config["min_samples"] or f + 1
        if size > n:
            raise DegenerateFit(f"RANSAC needs {size} samples, got {n}")
        thr = self.config["residual_threshold"]
        if thr is None:
            thr = float(np.median(np.abs(y - np.median(y))))

        best_mask, best_count, best_score = None, -1, -np.inf
        for _ in range(self.config["max_trials"]):
            pick = rng.choice(n, size=size, replace=False)
            coef, icpt = ols(X[pick], y[pick])
            mask = np.abs(y - (X @ coef + icpt)) <= thr
            count = int(mask.sum())
            if count == 0 or count < best_count:
                continue
            score = _r2(y[mask], X[mask] @ coef + icpt)
            if count == best_count and score <= best_score:
                continue
            best_mask, best_count, best_score = mask, count, score
        if best_mask is None:
            raise DegenerateFit("RANSAC found no consensus set")
        self.inlier_mask_ = best_mask
        self.coef_, self.intercept_ = ols(X[best_mask], y[best_mask])
