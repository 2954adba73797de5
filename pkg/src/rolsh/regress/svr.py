"""Epsilon support vector regression with an RBF kernel, trained by SMO.

The dual has two variables per sample, ``a+`` and ``a-``, both boxed in
``[0, C]`` and tied by ``sum(a+ - a-) == 0``.  Each step picks the maximal
violating pair with second-order working-set selection and solves the
two-variable subproblem in closed form.  Only ``f = K @ (a+ - a-)`` is kept;
the gradients of both halves follow from it.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import DegenerateFit
from .base import Regressor, RegressorKind, standardize_stats

_TAU = 1e-12


class _KernelRows:
    """LRU cache of RBF kernel rows ``K[i, :]``."""

    def __init__(self, Z: np.ndarray, gamma: float, budget_mb: float):
        self.Z = Z
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", Z, Z)
        self.capacity = max(2, int(budget_mb * 2**20 / (8 * len(Z))))
        self.rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def __getitem__(self, i: int) -> np.ndarray:
        row = self.rows.get(i)
        if row is not None:
            self.rows.move_to_end(i)
            return row
        d2 = self.sq + self.sq[i] - 2.0 * (self.Z @ self.Z[i])
        np.maximum(d2, 0.0, out=d2)
        row = np.exp(-self.gamma * d2)
        row[i] = 1.0
        self.rows[i] = row
        if len(self.rows) > self.capacity:
            self.rows.popitem(last=False)
        return row


def _pair_update(ai, aj, zi, zj, Gi, Gj, Kij, C):
    """Closed-form two-variable step with box clipping (both bounds ``C``)."""
    if zi != zj:
        quad = max(2.0 + 2.0 * zi * zj * Kij, _TAU)
        delta = (-Gi - Gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > C:
                ai, aj = C, C - diff
        elif aj > C:
            aj, ai = C, C + diff
    else:
        quad = max(2.0 - 2.0 * zi * zj * Kij, _TAU)
        delta = (Gi - Gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
        elif aj < 0:
            aj, ai = 0.0, total
        if total > C:
            if aj > C:
                aj, ai = C, total - C
        elif ai < 0:
            ai, aj = 0.0, total
    return ai, aj


def smo_epsilon_svr(
    Z: np.ndarray,
    y: np.ndarray,
    C: float,
    epsilon: float,
    gamma: float,
    tol: float = 1e-3,
    max_iter: int | None = None,
    cache_mb: float = 256.0,
):
    """Solve the epsilon-SVR dual.

    Returns ``(beta, rho, converged, iterations)`` with the decision function
    ``sum_i beta_i K(z_i, z) - rho``.
    """
    n = len(y)
    rows = _KernelRows(Z, gamma, cache_mb)
    ap = np.zeros(n)
    am = np.zeros(n)
    f = np.zeros(n)
    max_iter = max_iter or 1000 * n
    neg_inf = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        e = y - f
        # -z*G over the "up" set and z*G over the "low" set, per half
        up_p = np.where(ap < C, e - epsilon, neg_inf)
        up_m = np.where(am > 0, e + epsilon, neg_inf)
        low_p = np.where(ap > 0, epsilon - e, neg_inf)
        low_m = np.where(am < C, -e - epsilon, neg_inf)
        ip, im = int(np.argmax(up_p)), int(np.argmax(up_m))
        if up_p[ip] >= up_m[im]:
            i, zi, gmax = ip, 1, up_p[ip]
        else:
            i, zi, gmax = im, -1, up_m[im]
        if gmax + max(low_p.max(), low_m.max()) < tol:
            converged = True
            break

        Ki = rows[i]
        quad = np.maximum(2.0 - 2.0 * Ki, _TAU)
        bp = gmax + low_p
        bm = gmax + low_m
        gain_p = np.where(bp > 0, bp * bp / quad, neg_inf)
        gain_m = np.where(bm > 0, bm * bm / quad, neg_inf)
        jp, jm = int(np.argmax(gain_p)), int(np.argmax(gain_m))
        if gain_p[jp] >= gain_m[jm]:
            j, zj = jp, 1
        else:
            j, zj = jm, -1
        if not np.isfinite(max(gain_p[jp], gain_m[jm])):
            break

        ai = ap[i] if zi == 1 else am[i]
        aj = ap[j] if zj == 1 else am[j]
        Gi = epsilon - e[i] if zi == 1 else e[i] + epsilon
        Gj = epsilon - e[j] if zj == 1 else e[j] + epsilon
        new_i, new_j = _pair_update(ai, aj, zi, zj, Gi, Gj, Ki[j], C)
        d_i, d_j = new_i - ai, new_j - aj
        if zi == 1:
            ap[i] = new_i
        else:
            am[i] = new_i
        if zj == 1:
            ap[j] = new_j
        else:
            am[j] = new_j
        Kj = rows[j]
        f += Ki * (zi * d_i)
        f += Kj * (zj * d_j)

    e = y - f
    rho = _intercept(ap, am, e, epsilon, C)
    return ap - am, rho, converged, it


def _intercept(ap, am, e, epsilon, C) -> float:
    # z*G for each half; free variables pin rho, bounded ones bracket it
    yg_p = epsilon - e
    yg_m = -e - epsilon
    free = np.concatenate([yg_p[(ap > 0) & (ap < C)], yg_m[(am > 0) & (am < C)]])
    if len(free):
        return float(free.mean())
    ub = np.concatenate([yg_p[ap == 0], yg_m[am == C]])
    lb = np.concatenate([yg_p[ap == C], yg_m[am == 0]])
    hi = ub.min() if len(ub) else np.inf
    lo = lb.max() if len(lb) else -np.inf
    return float((hi + lo) / 2.0)


class SVRRegressor(Regressor):
    """RBF epsilon-SVR on z-scored features.

    ``gamma="scale"`` resolves to ``1 / (f * var(Z))`` on the standardized
    training matrix ``Z``.
    """

    kind = RegressorKind.SVR
    standardizes = True
    defaults = {
        "C": 1.0,
        "epsilon": 0.1,
        "gamma": "scale",
        "tol": 1e-3,
        "max_passes": 1000,
        "cache_mb": 256.0,
    }

    def _fit(self, X, y, rng):
        c = self.config
        if np.ptp(y) == 0:
            raise DegenerateFit("SVR needs labels with nonzero variance")
        self.x_mean_, self.x_scale_ = standardize_stats(X)
        Z = (X - self.x_mean_) / self.x_scale_
        if c["gamma"] == "scale":
            var = Z.var()
            gamma = 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
        else:
            gamma = float(c["gamma"])
        beta, rho, self.converged, self.iterations_ = smo_epsilon_svr(
            Z, y, c["C"], c["epsilon"], gamma, c["tol"], c["max_passes"] * len(y), c["cache_mb"]
        )
        keep = beta != 0
        self.gamma_ = gamma
        self.support_vectors_ = Z[keep]
        self.dual_coef_ = beta[keep]
        self.intercept_ = -rho

    def _predict(self, X):
        Z = (X - self.x_mean_) / self.x_scale_
        sv = self.support_vectors_
        sv_sq = np.einsum("ij,ij->i", sv, sv)
        out = np.empty(len(Z))
        step = max(1, int(4 * 2**20 / max(len(sv), 1)))
        for s in range(0, len(Z), step):
            block = Z[s : s + step]
            d2 = np.einsum("ij,ij->i", block, block)[:, None] + sv_sq - 2.0 * (block @ sv.T)
            np.maximum(d2, 0.0, out=d2)
            out[s : s + step] = np.exp(-self.gamma_ * d2) @ self.dual_coef_
        return out + self.intercept_

    def _state(self):
        return {
            "x_mean": self.x_mean_,
            "x_scale": self.x_scale_,
            "support_vectors": self.support_vectors_,
            "dual_coef": self.dual_coef_,
            "intercept": np.float64(self.intercept_),
            "gamma": np.float64(self.gamma_),
        }

    def _restore(self, state):
        self.x_mean_, self.x_scale_ = state["x_mean"], state["x_scale"]
        self.support_vectors_ = state["support_vectors"]
        self.dual_coef_ = state["dual_coef"]
        self.intercept_ = float(state["intercept"])
        self.gamma_ = float(state["gamma"])
