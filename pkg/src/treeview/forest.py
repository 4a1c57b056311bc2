"""Random forest classifier over continuous features, built from scratch.

Bagged CART trees with per-node random feature candidates and the Gini
criterion.  Every tie (best split, majority vote) resolves toward the
smaller index so results are identical across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 50
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # default ceil(sqrt(d))
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class _Node:
    feature: int | None = None
    threshold: float | None = None
    left: "_Node | None" = None
    right: "_Node | None" = None
    votes: np.ndarray | None = None  # class counts, leaves only

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _best_split(x: np.ndarray, y: np.ndarray, feats: np.ndarray,
                num_labels: int, min_leaf: int):
    """Best (feature, threshold) by weighted Gini decrease; ties to the
    smaller feature index, then the smaller threshold."""
    n = len(y)
    parent = np.bincount(y, minlength=num_labels)
    g_parent = gini(parent)
    best = None  # (decrease, feature, threshold)
    for f in feats:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        onehot = np.zeros((n, num_labels))
        onehot[np.arange(n), ys] = 1.0
        left_counts = np.cumsum(onehot, axis=0)  # counts when splitting after row i
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if len(cut) == 0:
            continue
        nl = cut + 1
        nr = n - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        cut, nl, nr = cut[ok], nl[ok], nr[ok]
        if len(cut) == 0:
            continue
        lc = left_counts[cut]
        rc = parent[None, :] - lc
        g_left = 1.0 - np.sum((lc / nl[:, None]) ** 2, axis=1)
        g_right = 1.0 - np.sum((rc / nr[:, None]) ** 2, axis=1)
        decrease = g_parent - (nl / n) * g_left - (nr / n) * g_right
        j = int(np.argmax(decrease))  # first max -> smallest threshold
        if decrease[j] <= 0.0:
            continue
        if best is None or decrease[j] > best[0]:
            threshold = (xs[cut[j]] + xs[cut[j] + 1]) / 2.0
            best = (float(decrease[j]), int(f), float(threshold))
    return best


def _build(x, y, num_labels, rng, cfg: ForestConfig, depth, n_root, importance):
    counts = np.bincount(y, minlength=num_labels)
    n = len(y)
    pure = np.count_nonzero(counts) <= 1
    depth_stop = cfg.max_depth is not None and depth >= cfg.max_depth
    if pure or depth_stop or n < 2 * cfg.min_leaf:
        return _Node(votes=counts)

    d = x.shape[1]
    m = cfg.features_per_split or math.ceil(math.sqrt(d))
    feats = np.sort(rng.choice(d, size=min(m, d), replace=False))
    best = _best_split(x, y, feats, num_labels, cfg.min_leaf)
    if best is None:
        return _Node(votes=counts)

    decrease, feature, threshold = best
    importance[feature] += (n / n_root) * decrease
    mask = x[:, feature] <= threshold
    left = _build(x[mask], y[mask], num_labels, rng, cfg, depth + 1, n_root, importance)
    right = _build(x[~mask], y[~mask], num_labels, rng, cfg, depth + 1, n_root, importance)
    return _Node(feature=feature, threshold=threshold, left=left, right=right)


def _tree_predict(node: _Node, row: np.ndarray) -> int:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return int(np.argmax(node.votes))


@dataclass
class RandomForest:
    trees: list[_Node]
    num_labels: int
    num_features: int
    importances_raw: np.ndarray  # per-feature decrease, averaged over trees
    oob_accuracy: float

    def predict_one(self, row: np.ndarray) -> int:
        row = np.asarray(row, dtype=float)
        if row.shape != (self.num_features,):
            raise ValueError(f"expected {self.num_features} features, got {row.shape}")
        votes = np.bincount(
            [_tree_predict(t, row) for t in self.trees], minlength=self.num_labels
        )
        return int(np.argmax(votes))

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.array([self.predict_one(row) for row in x])

    def feature_importances(self) -> np.ndarray:
        """Mean Gini-decrease importance normalized to sum 1 (all-zero if no splits)."""
        total = self.importances_raw.sum()
        if total == 0.0:
            return np.zeros_like(self.importances_raw)
        return self.importances_raw / total


def fit_forest(x: np.ndarray, y: np.ndarray, num_labels: int, cfg: ForestConfig) -> RandomForest:
    """Bootstrap-bagged trees; per-tree seeds are cfg.seed + tree index."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    n, d = x.shape
    trees = []
    importance_sum = np.zeros(d)
    oob_votes = np.zeros((n, num_labels), dtype=int)

    for t in range(cfg.num_trees):
        rng = np.random.default_rng(cfg.seed + t)
        boot = rng.integers(0, n, size=n)
        importance = np.zeros(d)
        root = _build(x[boot], y[boot], num_labels, rng, cfg, 0, n, importance)
        trees.append(root)
        importance_sum += importance
        out_of_bag = np.setdiff1d(np.arange(n), boot, assume_unique=False)
        for i in out_of_bag:
            oob_votes[i, _tree_predict(root, x[i])] += 1

    covered = oob_votes.sum(axis=1) > 0
    if covered.any():
        oob_pred = oob_votes[covered].argmax(axis=1)
        oob_accuracy = float(np.mean(oob_pred == y[covered]))
    else:
        oob_accuracy = 0.0
    return RandomForest(
        trees=trees,
        num_labels=num_labels,
        num_features=d,
        importances_raw=importance_sum / cfg.num_trees,
        oob_accuracy=oob_accuracy,
    )


def _node_to_json(node: _Node) -> dict:
    if node.is_leaf:
        return {"votes": node.votes.tolist()}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def _node_from_json(obj: dict) -> _Node:
    if "votes" in obj:
        return _Node(votes=np.array(obj["votes"], dtype=int))
    return _Node(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        left=_node_from_json(obj["left"]),
        right=_node_from_json(obj["right"]),
    )


def forest_to_json(forest: RandomForest) -> dict:
    return {
        "num_labels": forest.num_labels,
        "num_features": forest.num_features,
        "importances_raw": forest.importances_raw.tolist(),
        "oob_accuracy": forest.oob_accuracy,
        "trees": [_node_to_json(t) for t in forest.trees],
    }


def forest_from_json(obj: dict) -> RandomForest:
    return RandomForest(
        trees=[_node_from_json(t) for t in obj["trees"]],
        num_labels=int(obj["num_labels"]),
        num_features=int(obj["num_features"]),
        importances_raw=np.array(obj["importances_raw"], dtype=float),
        oob_accuracy=float(obj["oob_accuracy"]),
    )
