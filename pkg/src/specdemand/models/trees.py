"""Regression trees, random forest and least-squares gradient boosting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# relative slack when comparing split gains, so float noise cannot reorder
# candidates that are equal in exact arithmetic
_GAIN_RTOL = 1e-12


@dataclass
class Tree:
    """Flat binary tree. Leaves have ``feature == -1``; ``x <= threshold`` goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            nd = 0
            while self.feature[nd] >= 0:
                nd = self.left[nd] if x[self.feature[nd]] <= self.threshold[nd] else self.right[nd]
            out[i] = nd
        return out

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def to_dict(self):
        def node(i):
            if self.feature[i] < 0:
                return {"leaf": float(self.value[i]), "n": int(self.n_samples[i])}
            return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                    "n": int(self.n_samples[i]),
                    "left": node(self.left[i]), "right": node(self.right[i])}
        return node(0)

    @classmethod
    def from_dict(cls, d):
        b = _Builder()

        def walk(nd):
            i = b.new(float(nd.get("leaf", 0.0)), int(nd["n"]))
            if "leaf" not in nd:
                b.feature[i] = int(nd["feature"])
                b.threshold[i] = float(nd["threshold"])
                b.left[i] = walk(nd["left"])
                b.right[i] = walk(nd["right"])
            return i
        walk(d)
        return b.tree()


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples = [], []

    def new(self, value, n):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_samples.append(n)
        return len(self.value) - 1

    def tree(self):
        return Tree(np.array(self.feature, dtype=np.int64), np.array(self.threshold),
                    np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
                    np.array(self.value), np.array(self.n_samples, dtype=np.int64))


def best_split(X, y, min_leaf, features=None):
    """Best (feature, threshold, gain) by SSE reduction, or None.

    Thresholds are midpoints of consecutive distinct sorted values; ties go
    to the lowest feature index, then the lowest threshold.
    """
    n = len(y)
    if n < 2 * min_leaf:
        return None
    features = range(X.shape[1]) if features is None else sorted(features)
    total = y.sum()
    base = total * total / n
    best = None
    best_gain = 0.0
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        gain = csum ** 2 / n_left + (total - csum) ** 2 / (n - n_left) - base
        gain = np.where(valid, gain, -np.inf)
        # tolerance keeps float noise from splitting a node with no real gain
        # and from letting a later candidate overtake an equal earlier one
        scale = _GAIN_RTOL * max(1.0, float(ys @ ys))
        i = int(np.flatnonzero(gain >= gain.max() - scale)[0])
        g = float(gain[i])
        if g > best_gain + scale:
            best_gain = g
            best = (f, 0.5 * (xs[i] + xs[i + 1]), g)
    return best


def _grow(X, y, max_depth, min_leaf, feature_frac=1.0, rng=None):
    b = _Builder()
    p = X.shape[1]
    k = max(1, int(round(feature_frac * p)))

    def grow(idx, depth):
        yi = y[idx]
        node = b.new(float(yi.mean()), len(idx))
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            return node
        feats = None
        if k < p:
            feats = rng.choice(p, size=k, replace=False)
        split = best_split(X[idx], yi, min_leaf, feats)
        if split is None:
            return node
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        b.feature[node] = f
        b.threshold[node] = thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return b.tree()


@dataclass
class TreeEnsemble:
    kind: str  # "single_tree" | "random_forest" | "gradient_boosted"
    trees: list
    learning_rate: float = 1.0
    base_value: float = 0.0
    rng_seed: int = 0
    feature_names: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    train_rmse: list = field(default_factory=list)

    def predict(self, X):
        if self.kind == "gradient_boosted":
            out = np.full(len(X), self.base_value)
            for t in self.trees:
                out += self.learning_rate * t.predict(X)
            return out
        preds = np.stack([t.predict(X) for t in self.trees])
        return preds.mean(axis=0)

    def staged_predict(self, X):
        """Boosted predictions after each round."""
        out = np.full(len(X), self.base_value)
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
            yield out

    def to_dict(self):
        return {"type": "tree_ensemble", "kind": self.kind,
                "learning_rate": self.learning_rate, "base_value": self.base_value,
                "rng_seed": self.rng_seed, "feature_names": list(self.feature_names),
                "params": dict(self.params), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], [Tree.from_dict(t) for t in d["trees"]],
                   float(d["learning_rate"]), float(d["base_value"]), int(d["rng_seed"]),
                   list(d.get("feature_names", [])), dict(d.get("params", {})))


def _xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X and y must be non-empty and aligned")
    return X, y


def fit_tree(X, y, max_depth=4, min_leaf=1, feature_names=None):
    X, y = _xy(X, y)
    if len(y) < 2 * min_leaf:
        raise ValueError("fewer than 2 * min_leaf rows")
    tree = _grow(X, y, max_depth, min_leaf)
    return TreeEnsemble("single_tree", [tree], 1.0, 0.0, 0, list(feature_names or []),
                        {"max_depth": max_depth, "min_leaf": min_leaf})


def fit_forest(X, y, n_trees=100, max_depth=8, min_leaf=3, feature_frac=1.0 / 3.0,
               seed=0, bootstrap=True, feature_names=None):
    """Bagged trees with per-split feature subsampling; predicts the tree mean."""
    X, y = _xy(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0.0 < feature_frac <= 1.0:
        raise ValueError("feature_frac must lie in (0, 1]")
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, len(y), size=len(y)) if bootstrap else np.arange(len(y))
        trees.append(_grow(X[idx], y[idx], max_depth, min_leaf, feature_frac, rng))
    params = {"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf,
              "feature_frac": feature_frac, "bootstrap": bootstrap}
    return TreeEnsemble("random_forest", trees, 1.0, 0.0, seed, list(feature_names or []), params)


def fit_gbm(X, y, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=5, seed=0,
            feature_frac=1.0, feature_names=None):
    """Least-squares boosting: each round fits a tree to the current residuals.

    ``feature_frac`` below 1 samples that share of features per round.
    """
    X, y = _xy(X, y)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    base = float(y.mean())
    pred = np.full(len(y), base)
    p = X.shape[1]
    k = max(1, int(round(feature_frac * p)))
    trees, history = [], []
    for _ in range(n_rounds):
        resid = y - pred
        if k < p:
            cols = np.sort(rng.choice(p, size=k, replace=False))
            t = _grow(X[:, cols], resid, max_depth, min_leaf)
            t.feature = np.where(t.feature >= 0, cols[np.maximum(t.feature, 0)], -1)
        else:
            t = _grow(X, resid, max_depth, min_leaf)
        trees.append(t)
        pred = pred + learning_rate * t.predict(X)
        history.append(float(np.sqrt(np.mean((y - pred) ** 2))))
    params = {"n_rounds": n_rounds, "max_depth": max_depth, "min_leaf": min_leaf,
              "feature_frac": feature_frac}
    return TreeEnsemble("gradient_boosted", trees, learning_rate, base, seed,
                        list(feature_names or []), params, history)
