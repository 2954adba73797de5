"""CART regression trees and least-squares gradient boosting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Regressor, RegressorKind


@dataclass
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    A row goes left when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            x = X[rows, np.maximum(f, 0)]
            nxt = np.where(x <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(X, y, idx, order_t, member):
    """Best variance-reduction split of the rows ``idx``.

    Returns ``(feature, threshold)`` or None.  Candidate thresholds are
    midpoints between consecutive distinct sorted values; ties go to the lower
    feature index, then the lower threshold.
    """
    n = len(X)
    ns = len(idx)
    f = X.shape[1]
    if order_t is None or ns * max(np.log2(ns), 1.0) * 2 < n:
        local = np.argsort(X[idx], axis=0, kind="stable").T
        sel = idx[local]
    else:
        member[idx] = True
        sel = order_t[member[order_t]].reshape(f, ns)
        member[idx] = False
    xs = X[sel, np.arange(f)[:, None]]
    cs = np.cumsum(y[sel], axis=1)
    left_n = np.arange(1, ns)
    left_s = cs[:, :-1]
    right_s = cs[:, -1:] - left_s
    score = left_s * left_s / left_n + right_s * right_s / (ns - left_n)
    score[xs[:, 1:] <= xs[:, :-1]] = -np.inf
    flat = int(np.argmax(score))
    j, p = divmod(flat, ns - 1)
    if not np.isfinite(score[j, p]):
        return None
    lo, hi = xs[j, p], xs[j, p + 1]
    thr = (lo + hi) / 2.0
    if thr >= hi:  # adjacent doubles: the midpoint rounds up
        thr = lo
    return j, thr


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    order_t: np.ndarray | None = None,
) -> Tree:
    """Grow a CART tree; leaves predict the mean label of their rows.

    ``order_t`` is an optional (f, n) argsort of ``X`` columns, reused across
    calls on the same ``X`` (gradient boosting fits 100 trees on one matrix).
    """
    n = len(X)
    if order_t is None and n > 256:
        order_t = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    member = np.zeros(n, dtype=bool)
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(y.mean())]
    stack = [(0, np.arange(n), 0)]
    depth_seen = 0
    while stack:
        node, idx, depth = stack.pop()
        depth_seen = max(depth_seen, depth)
        ys = y[idx]
        if len(idx) < min_samples_split or (max_depth is not None and depth >= max_depth):
            continue
        if ys.max() == ys.min():
            continue
        split = _best_split(X, y, idx, order_t, member)
        if split is None:
            continue
        j, thr = split
        goes_left = X[idx, j] <= thr
        children = []
        for part in (idx[goes_left], idx[~goes_left]):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[part].mean()))
            children.append(len(feature) - 1)
            stack.append((children[-1], part, depth + 1))
        feature[node], threshold[node] = j, thr
        left[node], right[node] = children
    return Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        depth=depth_seen,
    )


_TREE_FIELDS = ("feature", "threshold", "left", "right", "value")


def _pack(trees: list[Tree]) -> dict[str, np.ndarray]:
    state = {name: np.concatenate([getattr(t, name) for t in trees]) for name in _TREE_FIELDS}
    state["offsets"] = np.cumsum([0] + [t.node_count for t in trees]).astype(np.int64)
    state["depths"] = np.array([t.depth for t in trees], dtype=np.int64)
    return state


def _unpack(state: dict[str, np.ndarray]) -> list[Tree]:
    off = state["offsets"]
    return [
        Tree(*(state[name][off[i] : off[i + 1]] for name in _TREE_FIELDS), depth=int(state["depths"][i]))
        for i in range(len(off) - 1)
    ]


class DecisionTreeRegressor(Regressor):
    kind = RegressorKind.DECISION_TREE
    defaults = {"max_depth": None, "min_samples_split": 2}

    def _fit(self, X, y, rng):
        self.tree_ = grow_tree(X, y, self.config["max_depth"], self.config["min_samples_split"])

    def _predict(self, X):
        return self.tree_.predict(X)

    def _state(self):
        return _pack([self.tree_])

    def _restore(self, state):
        self.tree_ = _unpack(state)[0]


class GradientBoostingRegressor(Regressor):
    """Squared-loss boosting: each depth-limited tree fits the current residuals."""

    kind = RegressorKind.GRADIENT_BOOSTING
    defaults = {
        "n_estimators": 100,
        "max_depth": 3,
        "learning_rate": 0.1,
        "subsample": 1.0,
        "min_samples_split": 2,
    }

    def _fit(self, X, y, rng):
        c = self.config
        n = len(X)
        self.init_ = float(y.mean())
        current = np.full(n, self.init_)
        order_t = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        self.trees_ = []
        self.train_loss_ = []
        for _ in range(c["n_estimators"]):
            resid = y - current
            if c["subsample"] < 1.0:
                rows = np.sort(rng.choice(n, size=max(2, int(c["subsample"] * n)), replace=False))
                tree = grow_tree(X[rows], resid[rows], c["max_depth"], c["min_samples_split"])
            else:
                tree = grow_tree(X, resid, c["max_depth"], c["min_samples_split"], order_t)
            current = current + c["learning_rate"] * tree.predict(X)
            self.trees_.append(tree)
            self.train_loss_.append(float(np.mean((y - current) ** 2)))

    def staged_predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.init_)
        for tree in self.trees_:
            out = out + self.config["learning_rate"] * tree.predict(X)
            yield out

    def _predict(self, X):
        out = np.full(len(X), self.init_)
        for tree in self.trees_:
            out += self.config["learning_rate"] * tree.predict(X)
        return out

    def _state(self):
        return {**_pack(self.trees_), "init": np.float64(self.init_)}

    def _restore(self, state):
        self.trees_ = _unpack(state)
        self.init_ = float(state["init"])
