"""Decision-tree surrogate over meta-features.

Internal nodes test "meta[k] == c" for a factor k and cluster label c;
cluster ids carry no order, so splits are one-vs-rest equality tests rather
than thresholds.  Every node keeps its per-class training histogram, which
is what the explanation layer turns into rejection evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .forest import gini
from .meta import FactorPredictor, MetaFeatureMatrix, predict_meta_feature
from .mlp import MlpModel, predict_proba


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_leaf: int = 1
    min_impurity_decrease: float = 0.0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.min_impurity_decrease < 0:
            raise ValueError("min_impurity_decrease must be >= 0")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class TreeNode:
    histogram: np.ndarray  # per-class training counts at this node
    factor: int | None = None
    value: int | None = None
    eq_child: "TreeNode | None" = None
    ne_child: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.factor is None

    @property
    def leaf_class(self) -> int:
        return int(np.argmax(self.histogram))


@dataclass
class DecisionTreeSurrogate:
    root: TreeNode
    num_classes: int
    num_factors: int

    def node_count(self) -> int:
        def count(node):
            if node.is_leaf:
                return 1
            return 1 + count(node.eq_child) + count(node.ne_child)

        return count(self.root)


@dataclass
class PathStep:
    """One visited node: its histogram plus the test and branch taken (leaf: None)."""

    histogram: np.ndarray
    factor: int | None
    value: int | None
    branch: str | None  # "eq" or "ne"


@dataclass
class DecisionPath:
    steps: list[PathStep]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def leaf_histogram(self) -> np.ndarray:
        return self.steps[-1].histogram

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.leaf_histogram))


def fit_surrogate(meta: MetaFeatureMatrix, labels: np.ndarray, cfg: TreeConfig,
                  num_classes: int | None = None) -> DecisionTreeSurrogate:
    """Greedy CART over categorical meta-features.

    At each node every (factor, value) equality split is scored by weighted
    Gini decrease; ties resolve toward the smaller (factor, value) pair.
    """
    labels = np.asarray(labels, dtype=int)
    if meta.num_samples == 0 or len(labels) == 0:
        raise ValueError("empty training set")
    if len(labels) != meta.num_samples:
        raise ValueError("meta-feature matrix and labels are misaligned")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    m = meta.values

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        hist = np.bincount(labels[idx], minlength=num_classes)
        node = TreeNode(histogram=hist)
        n = len(idx)
        if np.count_nonzero(hist) <= 1:
            return node
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return node
        if n < 2 * cfg.min_leaf:
            return node

        g_parent = gini(hist)
        best = None  # (decrease, factor, value, eq_mask)
        for k in range(meta.num_factors):
            column = m[k, idx]
            for c in np.unique(column):
                eq_mask = column == c
                n_eq = int(eq_mask.sum())
                n_ne = n - n_eq
                if n_eq < cfg.min_leaf or n_ne < cfg.min_leaf:
                    continue
                h_eq = np.bincount(labels[idx[eq_mask]], minlength=num_classes)
                h_ne = hist - h_eq
                decrease = g_parent - (n_eq / n) * gini(h_eq) - (n_ne / n) * gini(h_ne)
                if decrease <= 0.0 or decrease < cfg.min_impurity_decrease:
                    continue
                if best is None or decrease > best[0]:
                    best = (decrease, k, int(c), eq_mask)
        if best is None:
            return node

        _, k, c, eq_mask = best
        node.factor = k
        node.value = c
        node.eq_child = build(idx[eq_mask], depth + 1)
        node.ne_child = build(idx[~eq_mask], depth + 1)
        return node

    root = build(np.arange(meta.num_samples), 0)
    return DecisionTreeSurrogate(root=root, num_classes=num_classes,
                                 num_factors=meta.num_factors)


def _walk(tree: DecisionTreeSurrogate, meta_row: np.ndarray) -> list[tuple[TreeNode, str | None]]:
    node = tree.root
    visited = []
    while not node.is_leaf:
        branch = "eq" if int(meta_row[node.factor]) == node.value else "ne"
        visited.append((node, branch))
        node = node.eq_child if branch == "eq" else node.ne_child
    visited.append((node, None))
    return visited


def surrogate_predict(tree: DecisionTreeSurrogate, meta_row) -> tuple[int, np.ndarray]:
    """Leaf class and normalized leaf histogram.  Unseen meta values take
    the "unequal" branch, so out-of-range inputs never error."""
    meta_row = np.asarray(meta_row, dtype=int)
    leaf = _walk(tree, meta_row)[-1][0]
    posterior = leaf.histogram / leaf.histogram.sum()
    return leaf.leaf_class, posterior


def decision_path(tree: DecisionTreeSurrogate, meta_row) -> DecisionPath:
    meta_row = np.asarray(meta_row, dtype=int)
    steps = [
        PathStep(histogram=node.histogram.copy(), factor=node.factor,
                 value=node.value, branch=branch)
        for node, branch in _walk(tree, meta_row)
    ]
    return DecisionPath(steps=steps)


@dataclass
class EvaluationReport:
    network_accuracy: float
    surrogate_accuracy: float
    fidelity: float

    def to_json(self) -> dict:
        return {
            "network_accuracy": self.network_accuracy,
            "surrogate_accuracy": self.surrogate_accuracy,
            "fidelity": self.fidelity,
        }


def evaluate(tree: DecisionTreeSurrogate, predictors: list[FactorPredictor],
             model: MlpModel, data: Dataset) -> EvaluationReport:
    """Accuracy of network and surrogate plus their agreement (fidelity).

    The surrogate is evaluated the way it is used on unseen samples: its
    meta-features come from the factor predictors, not from activations.
    """
    if data.features.shape[1] != model.input_dim:
        raise ValueError("dataset width does not match model input_dim")
    network_pred = predict_proba(model, data.features).argmax(axis=1)
    surrogate_pred = np.array([
        surrogate_predict(tree, predict_meta_feature(predictors, row))[0]
        for row in data.features
    ])
    return EvaluationReport(
        network_accuracy=float(np.mean(network_pred == data.labels)),
        surrogate_accuracy=float(np.mean(surrogate_pred == data.labels)),
        fidelity=float(np.mean(surrogate_pred == network_pred)),
    )


def _tree_node_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf_class": node.leaf_class, "histogram": node.histogram.tolist()}
    return {
        "factor": node.factor,
        "value": node.value,
        "histogram": node.histogram.tolist(),
        "eq_child": _tree_node_to_json(node.eq_child),
        "ne_child": _tree_node_to_json(node.ne_child),
    }


def _tree_node_from_json(obj: dict) -> TreeNode:
    if "leaf_class" in obj:
        return TreeNode(histogram=np.array(obj["histogram"], dtype=int))
    return TreeNode(
        histogram=np.array(obj["histogram"], dtype=int),
        factor=int(obj["factor"]),
        value=int(obj["value"]),
        eq_child=_tree_node_from_json(obj["eq_child"]),
        ne_child=_tree_node_from_json(obj["ne_child"]),
    )


def tree_to_json(tree: DecisionTreeSurrogate) -> dict:
    return {
        "num_classes": tree.num_classes,
        "num_factors": tree.num_factors,
        "root": _tree_node_to_json(tree.root),
    }


def tree_from_json(obj: dict) -> DecisionTreeSurrogate:
    return DecisionTreeSurrogate(
        root=_tree_node_from_json(obj["root"]),
        num_classes=int(obj["num_classes"]),
        num_factors=int(obj["num_factors"]),
    )
