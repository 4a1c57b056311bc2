"""Cluster samples inside each factor and assemble the meta-feature matrix.

Each factor's samples are grouped by k-means (k-means++ seeding, best of
several restarts); a sample's meta-feature is the vector of its per-factor
cluster labels.  A random forest per factor learns to predict that factor's
cluster label directly from input features, so explanations of new samples
never need the network's activations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forest import ForestConfig, RandomForest, fit_forest, forest_from_json, forest_to_json
from .mlp import ActivationMatrix


@dataclass
class FactorClustering:
    factor_index: int
    num_clusters: int
    centroids: np.ndarray  # (L, N_i)
    train_labels: np.ndarray  # (T,) in [0, L)
    inertia: float
    sample_ids: list[str]
    inertia_history: list[float] = field(default_factory=list)


@dataclass
class MetaFeatureMatrix:
    values: np.ndarray  # (K, T) integer cluster labels
    sample_ids: list[str]

    @property
    def num_factors(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]


@dataclass
class FactorPredictor:
    """Forest mapping input features to a factor's cluster label."""

    factor_index: int
    forest: RandomForest
    oob_accuracy: float

    def predict_one(self, row: np.ndarray) -> int:
        return self.forest.predict_one(row)


def _kmeans_pp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total == 0.0:
            # all remaining mass at distance 0: take the smallest unused index
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    break
            else:
                chosen.append(chosen[-1])
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[chosen[-1]]) ** 2, axis=1))
    return points[chosen].astype(float).copy()


def _sqdist(points: np.ndarray, centroids: np.ndarray, p2: np.ndarray) -> np.ndarray:
    c2 = np.sum(centroids ** 2, axis=1)
    return np.maximum(p2[:, None] - 2.0 * points @ centroids.T + c2[None, :], 0.0)


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """Lloyd iterations with farthest-point repair for empty clusters.

    Returns (labels, centroids, inertia, history) where history holds the
    post-assignment inertia of every iteration (non-increasing).
    """
    n, _ = points.shape
    k = centroids.shape[0]
    p2 = np.sum(points ** 2, axis=1)
    history: list[float] = []
    prev_labels = None
    labels = None
    for _ in range(max_iter):
        d2 = _sqdist(points, centroids, p2)
        labels = np.argmin(d2, axis=1)
        empty = [c for c in range(k) if not np.any(labels == c)]
        if empty:
            assigned = d2[np.arange(n), labels].copy()
            for c in empty:
                far = int(np.argmax(assigned))
                centroids[c] = points[far]
                assigned[far] = -1.0
            d2 = _sqdist(points, centroids, p2)
            labels = np.argmin(d2, axis=1)
        # exact cost of the chosen assignment, no cancellation tricks
        inertia = float(np.sum((points - centroids[labels]) ** 2))
        history.append(inertia)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return labels, centroids, history[-1], history


def cluster_factor_samples(fa: ActivationMatrix, num_clusters: int, seed: int,
                           restarts: int = 10, factor_index: int = 0) -> FactorClustering:
    """k-means over the factor's sample columns; best of ``restarts`` by inertia.

    Restart r uses seed + r, so results are reproducible and independent of
    scheduling order.
    """
    t = fa.num_samples
    if not 1 <= num_clusters <= t:
        raise ValueError(f"num_clusters must lie in [1, {t}], got {num_clusters}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    points = fa.values.T.copy()  # (T, N_i)

    best = None
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        centroids = _kmeans_pp_init(points, num_clusters, rng)
        labels, centroids, inertia, history = _lloyd(points, centroids)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia, history)

    labels, centroids, inertia, history = best
    return FactorClustering(
        factor_index=factor_index,
        num_clusters=num_clusters,
        centroids=centroids,
        train_labels=labels.astype(int),
        inertia=inertia,
        sample_ids=list(fa.sample_ids),
        inertia_history=history,
    )


def build_meta_matrix(clusterings: list[FactorClustering]) -> MetaFeatureMatrix:
    """Stack per-factor cluster labels into the K x T meta-feature matrix."""
    if not clusterings:
        raise ValueError("need at least one factor clustering")
    ref = clusterings[0].sample_ids
    for fc in clusterings[1:]:
        if fc.sample_ids != ref:
            raise ValueError("factor clusterings disagree on samples or their order")
    return MetaFeatureMatrix(
        values=np.stack([fc.train_labels for fc in clusterings]).astype(int),
        sample_ids=list(ref),
    )


def train_factor_predictor(features: np.ndarray, fc: FactorClustering,
                           cfg: ForestConfig) -> FactorPredictor:
    """Fit the factor's random forest on input features vs cluster labels."""
    features = np.asarray(features, dtype=float)
    if features.shape[0] != len(fc.train_labels):
        raise ValueError("feature rows do not match clustering sample count")
    forest = fit_forest(features, fc.train_labels, fc.num_clusters, cfg)
    return FactorPredictor(
        factor_index=fc.factor_index,
        forest=forest,
        oob_accuracy=forest.oob_accuracy,
    )


def predict_meta_feature(predictors: list[FactorPredictor], input_row: np.ndarray) -> np.ndarray:
    """Meta-feature of a single sample: one forest prediction per factor."""
    input_row = np.asarray(input_row, dtype=float)
    if not predictors:
        raise ValueError("no factor predictors given")
    return np.array([p.predict_one(input_row) for p in predictors], dtype=int)


def importance(fp: FactorPredictor) -> np.ndarray:
    """Per-input-feature Gini importance of the factor's forest (sums to 1 or 0)."""
    return fp.forest.feature_importances()


def assign_by_centroid(column: np.ndarray, fc: FactorClustering) -> int:
    """Nearest-centroid cluster for one activation column; ties to the smaller index."""
    column = np.asarray(column, dtype=float)
    if column.shape != (fc.centroids.shape[1],):
        raise ValueError(
            f"expected activation column of width {fc.centroids.shape[1]}, got {column.shape}"
        )
    d2 = np.sum((fc.centroids - column) ** 2, axis=1)
    return int(np.argmin(d2))


def clustering_to_json(fc: FactorClustering) -> dict:
    return {
        "factor_index": fc.factor_index,
        "num_clusters": fc.num_clusters,
        "centroids": fc.centroids.tolist(),
        "train_labels": fc.train_labels.tolist(),
        "inertia": fc.inertia,
        "sample_ids": fc.sample_ids,
    }


def clustering_from_json(obj: dict) -> FactorClustering:
    return FactorClustering(
        factor_index=int(obj["factor_index"]),
        num_clusters=int(obj["num_clusters"]),
        centroids=np.array(obj["centroids"], dtype=float),
        train_labels=np.array(obj["train_labels"], dtype=int),
        inertia=float(obj["inertia"]),
        sample_ids=list(obj["sample_ids"]),
    )


def predictor_to_json(fp: FactorPredictor) -> dict:
    return {
        "factor_index": fp.factor_index,
        "oob_accuracy": fp.oob_accuracy,
        "forest": forest_to_json(fp.forest),
    }


def predictor_from_json(obj: dict) -> FactorPredictor:
    return FactorPredictor(
        factor_index=int(obj["factor_index"]),
        forest=forest_from_json(obj["forest"]),
        oob_accuracy=float(obj["oob_accuracy"]),
    )
