"""One-hidden-layer ReLU network trained with Adam on squared loss."""

from __future__ import annotations

import math

import numpy as np

from .base import Regressor, RegressorKind, standardize_stats

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def init_params(n_in: int, n_hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform init with bound ``sqrt(6 / fan_in)`` per layer."""
    params = {}
    for name, fan_in, shape in (("1", n_in, (n_in, n_hidden)), ("2", n_hidden, (n_hidden, 1))):
        bound = math.sqrt(6.0 / fan_in)
        params["W" + name] = rng.uniform(-bound, bound, shape)
        params["b" + name] = rng.uniform(-bound, bound, shape[1])
    return params


def forward(params, X) -> np.ndarray:
    hidden = np.maximum(X @ params["W1"] + params["b1"], 0.0)
    return (hidden @ params["W2"] + params["b2"]).ravel()


def loss_and_grads(params, X, y, l2: float = 0.0):
    """Half mean squared error plus ``l2 / (2 n) * ||W||^2`` and its gradients."""
    n = len(X)
    pre = X @ params["W1"] + params["b1"]
    hidden = np.maximum(pre, 0.0)
    out = (hidden @ params["W2"] + params["b2"]).ravel()
    resid = out - y
    loss = 0.5 * float(resid @ resid) / n
    loss += 0.5 * l2 * (float(np.sum(params["W1"] ** 2)) + float(np.sum(params["W2"] ** 2))) / n

    d_out = (resid / n)[:, None]
    grads = {
        "W2": hidden.T @ d_out + l2 * params["W2"] / n,
        "b2": d_out.sum(axis=0),
    }
    d_hidden = (d_out @ params["W2"].T) * (pre > 0)
    grads["W1"] = X.T @ d_hidden + l2 * params["W1"] / n
    grads["b1"] = d_hidden.sum(axis=0)
    return loss, grads


class MLPRegressor(Regressor):
    """Mini-batch Adam with early stopping on a 10% validation carve-out.

    Training stops when validation MSE has not improved by ``tol`` for
    ``n_iter_no_change`` epochs; the best validation weights are kept.
    Features are z-scored internally.
    """

    kind = RegressorKind.MLP
    standardizes = True
    defaults = {
        "hidden": 100,
        "learning_rate": 1e-3,
        "beta_1": 0.9,
        "beta_2": 0.999,
        "adam_epsilon": 1e-8,
        "l2": 1e-4,
        "batch_size": 200,
        "max_epochs": 200,
        "validation_fraction": 0.1,
        "n_iter_no_change": 10,
        "tol": 1e-4,
    }

    def _fit(self, X, y, rng):
        c = self.config
        self.x_mean_, self.x_scale_ = standardize_stats(X)
        Z = (X - self.x_mean_) / self.x_scale_
        params = init_params(Z.shape[1], c["hidden"], rng)

        n = len(Z)
        n_val = math.ceil(c["validation_fraction"] * n) if c["validation_fraction"] > 0 else 0
        if n - n_val < 1 or n_val < 1:
            n_val = 0
        perm = rng.permutation(n)
        val, train = perm[:n_val], perm[n_val:]
        Zt, yt = Z[train], y[train]
        Zv, yv = (Z[val], y[val]) if n_val else (Zt, yt)

        m1 = {k: np.zeros_like(v) for k, v in params.items()}
        m2 = {k: np.zeros_like(v) for k, v in params.items()}
        b1, b2, eps, lr = c["beta_1"], c["beta_2"], c["adam_epsilon"], c["learning_rate"]
        batch = min(c["batch_size"], len(Zt))

        best = {k: v.copy() for k, v in params.items()}
        best_loss = np.inf
        stale = 0
        step = 0
        self.converged = False
        self.val_loss_ = []
        for _ in range(c["max_epochs"]):
            order = rng.permutation(len(Zt))
            for s in range(0, len(Zt), batch):
                rows = order[s : s + batch]
                _, grads = loss_and_grads(params, Zt[rows], yt[rows], c["l2"])
                step += 1
                lr_t = lr * math.sqrt(1.0 - b2**step) / (1.0 - b1**step)
                for k in PARAM_NAMES:
                    g = grads[k]
                    m1[k] = b1 * m1[k] + (1.0 - b1) * g
                    m2[k] = b2 * m2[k] + (1.0 - b2) * g * g
                    params[k] = params[k] - lr_t * m1[k] / (np.sqrt(m2[k]) + eps)
            resid = forward(params, Zv) - yv
            val_loss = float(resid @ resid) / len(yv)
            self.val_loss_.append(val_loss)
            if val_loss < best_loss - c["tol"]:
                stale = 0
            else:
                stale += 1
            if val_loss < best_loss:
                best_loss = val_loss
                best = {k: v.copy() for k, v in params.items()}
            if stale >= c["n_iter_no_change"]:
                self.converged = True
                break
        self.params_ = best
        self.epochs_ = len(self.val_loss_)

    def _predict(self, X):
        return forward(self.params_, (X - self.x_mean_) / self.x_scale_)

    def _state(self):
        return {"x_mean": self.x_mean_, "x_scale": self.x_scale_, **self.params_}

    def _restore(self, state):
        self.x_mean_, self.x_scale_ = state["x_mean"], state["x_scale"]
        self.params_ = {k: state[k] for k in PARAM_NAMES}
