"""Gradient-boosted regression trees on the binomial log-loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InputError
from .data import logistic, require_two_classes

MAX_LEAF_HALVINGS = 30
HESSIAN_FLOOR = 1e-12


@dataclass(frozen=True)
class GBCConfig:
    n_estimators: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 2

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InputError("n_estimators must be >= 1")
        if self.max_depth < 1 or self.min_samples_leaf < 1:
            raise InputError("max_depth and min_samples_leaf must be >= 1")
        if self.learning_rate < 0:
            raise InputError("learning_rate must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree; leaves have ``feature == -1``.

    A sample goes to the left child when ``x[feature] <= threshold``.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.intp),
                   np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=np.intp),
                   np.asarray(d["right"], dtype=np.intp),
                   np.asarray(d["value"], dtype=float))


def _best_split(X, r, min_leaf):
    """Exact greedy split minimizing the summed squared error of ``r``."""
    n, d = X.shape
    best = (0.0, -1, 0.0)
    total = r.sum()
    base = total * total / n
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cs = np.cumsum(r[order])[:-1]
        nl = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        gain = cs ** 2 / nl + (total - cs) ** 2 / (n - nl) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-15:
            best = (float(gain[k]), f, 0.5 * (xs[k] + xs[k + 1]))
    return best[1], best[2]


def fit_tree(X, r, max_depth: int, min_leaf: int) -> tuple[Tree, np.ndarray]:
    """Regression tree on residuals ``r``; returns the tree and each row's leaf."""
    feature, threshold, left, right = [], [], [], []
    leaf_of = np.zeros(X.shape[0], dtype=np.intp)

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        f = -1
        if depth < max_depth and idx.size >= 2 * min_leaf:
            f, thr = _best_split(X[idx], r[idx], min_leaf)
        if f < 0:
            leaf_of[idx] = node
            return node
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    n = len(feature)
    tree = Tree(np.array(feature, dtype=np.intp), np.array(threshold, dtype=float),
                np.array(left, dtype=np.intp), np.array(right, dtype=np.intp), np.zeros(n))
    return tree, leaf_of


def log_loss(y, F) -> float:
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


@dataclass(frozen=True)
class GBCModel:
    init: float
    trees: tuple
    learning_rate: float
    train_loss: tuple = ()

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = np.full(X.shape[0], self.init)
        for tree in self.trees:
            F += self.learning_rate * tree.predict(X)
        return F

    def score(self, X) -> np.ndarray:
        return logistic(self.decision(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(np.int64)

    def to_dict(self) -> dict:
        return {"init": self.init, "learning_rate": self.learning_rate,
                "trees": [t.to_dict() for t in self.trees],
                "train_loss": list(self.train_loss)}

    @classmethod
    def from_dict(cls, d) -> "GBCModel":
        return cls(float(d["init"]), tuple(Tree.from_dict(t) for t in d["trees"]),
                   float(d["learning_rate"]), tuple(float(v) for v in d.get("train_loss", ())))


def train_gbc(X, y, config: GBCConfig | None = None) -> GBCModel:
    """Stagewise boosting from the class log-odds.

    Each stage fits a tree to the residuals ``y - p`` and sets every leaf to
    one Newton step ``sum(r) / sum(p (1 - p))``.  A leaf whose scaled step
    would raise its own share of the training loss is halved until it does
    not, so the staged training loss never increases.
    """
    config = config or GBCConfig()
    X, y = require_two_classes(X, y)
    y = y.astype(float)
    prior = y.mean()
    init = float(np.log(prior / (1.0 - prior)))
    F = np.full(y.size, init)
    lr = config.learning_rate
    trees, losses = [], [log_loss(y, F)]
    for _ in range(config.n_estimators):
        p = logistic(F)
        r = y - p
        tree, leaf_of = fit_tree(X, r, config.max_depth, config.min_samples_leaf)
        values = tree.value.copy()
        for leaf in np.unique(leaf_of):
            rows = leaf_of == leaf
            hess = float(np.sum(p[rows] * (1.0 - p[rows])))
            step = float(np.sum(r[rows])) / max(hess, HESSIAN_FLOOR)
            before = log_loss(y[rows], F[rows])
            for _ in range(MAX_LEAF_HALVINGS):
                if log_loss(y[rows], F[rows] + lr * step) <= before:
                    break
                step *= 0.5
            else:
                step = 0.0
            values[leaf] = step
        tree = Tree(tree.feature, tree.threshold, tree.left, tree.right, values)
        F = F + lr * values[leaf_of]
        trees.append(tree)
        losses.append(log_loss(y, F))
    return GBCModel(init, tuple(trees), float(lr), tuple(losses))
