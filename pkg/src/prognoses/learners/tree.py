"""CART decision tree (Gini) and a bagged random forest built on it."""
from __future__ import annotations

import numpy as np

_TIE_TOL = 1e-12


class Tree:
    """Flat-array binary tree. Samples with ``x[feature] <= threshold`` go left.

    Leaves have ``feature == -1``; ``value`` holds the positive-class fraction
    of training samples reaching each node.
    """

    def __init__(self, feature, threshold, left, right, value, n_samples, gain):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.gain = np.asarray(gain, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def internal(self) -> np.ndarray:
        return self.feature >= 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            f = self.feature[node[idx]]
            go_left = X[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["n_samples"], d["gain"])


def _gini(pos, n):
    p = pos / n
    return 2.0 * p * (1.0 - p)


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """Exhaustive Gini split search over ``features`` (sorted ascending).

    Returns (feature, threshold, weighted_child_impurity) or None. Thresholds are
    midpoints between consecutive distinct values; ties go to the lowest feature
    index, then the lowest threshold.
    """
    n = X.shape[0]
    if n < 2 * min_leaf or n < 2:
        return None
    sub = X[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = y[order].astype(np.float64)
    pos_left = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    pos_right = ys.sum(axis=0)[None, :] - pos_left
    impurity = (n_left * _gini(pos_left, n_left) + n_right * _gini(pos_right, n_right)) / n
    valid = xs[1:] > xs[:-1]
    valid &= (n_left >= min_leaf) & (n_right >= min_leaf)
    if not np.any(valid):
        return None
    impurity = np.where(valid, impurity, np.inf).T  # rows: features, cols: positions
    best = impurity.min()
    j, i = np.argwhere(impurity <= best + _TIE_TOL)[0]
    threshold = (xs[i, j] + xs[i + 1, j]) / 2.0
    return int(features[j]), float(threshold), float(impurity[j, i])


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> Tree:
    """Grow a CART tree. ``max_features`` candidates are drawn per split when given."""
    y = np.asarray(y, dtype=bool)
    d = X.shape[1]
    feature, threshold, left, right, value, n_samples, gain = [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        n_samples.append(idx.size)
        gain.append(0.0)
        return len(feature) - 1

    root = new_node(np.arange(X.shape[0]))
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        pos = int(y[idx].sum())
        if pos == 0 or pos == idx.size:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if max_features is None or max_features >= d:
            cand = np.arange(d)
        else:
            cand = np.sort(rng.choice(d, size=max_features, replace=False))
        found = best_split(X[idx], y[idx], cand, min_samples_leaf)
        if found is None:
            continue
        f, thr, child_imp = found
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        gain[node] = idx.size * (_gini(pos, idx.size) - child_imp)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first (preorder)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, left, right, value, n_samples, gain)


def tree_seed(seed: int, tree_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,))


def grow_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    min_samples_leaf: int,
    seed: int,
    max_depth: int | None = None,
) -> tuple[list[Tree], int]:
    """Bagged trees with n-of-n bootstrap and floor(sqrt(d)) candidates per split."""
    n, d = X.shape
    mtry = max(1, int(np.floor(np.sqrt(d))))
    trees = []
    for b in range(n_trees):
        rng = np.random.default_rng(tree_seed(seed, b))
        boot = rng.integers(0, n, size=n)
        trees.append(grow_tree(X[boot], y[boot], max_depth, min_samples_leaf, mtry, rng))
    return trees, mtry
