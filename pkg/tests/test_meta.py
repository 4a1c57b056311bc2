import numpy as np
import pytest

from treeview.forest import ForestConfig
from treeview.meta import (FactorClustering, assign_by_centroid, build_meta_matrix,
                           cluster_factor_samples, clustering_from_json,
                           clustering_to_json, importance, predict_meta_feature,
                           train_factor_predictor, _lloyd)
from treeview.mlp import ActivationMatrix
from oracles import exhaustive_best_inertia


def make_fa(points, sample_ids=None):
    """Factor activation matrix whose columns are the given sample points."""
    points = np.asarray(points, dtype=float)
    return ActivationMatrix(
        values=points.T.copy(),
        neuron_ids=[(0, u) for u in range(points.shape[1])],
        sample_ids=sample_ids or [str(i) for i in range(points.shape[0])],
    )


def two_blobs(per_blob=10, separation=50.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal([0.0, 0.0], 1.0, size=(per_blob, 2))
    b = rng.normal([separation, 0.0], 1.0, size=(per_blob, 2))
    return np.vstack([a, b])


class TestKMeans:
    def test_single_cluster_is_mean(self):
        points = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]])
        fc = cluster_factor_samples(make_fa(points), 1, seed=0)
        assert fc.train_labels.tolist() == [0, 0, 0]
        assert np.allclose(fc.centroids[0], points.mean(axis=0))
        assert fc.inertia == pytest.approx(np.sum((points - points.mean(axis=0)) ** 2))

    def test_one_cluster_per_distinct_point(self):
        points = np.array([[0.0], [1.0], [5.0], [9.0]])
        fc = cluster_factor_samples(make_fa(points), 4, seed=1, restarts=5)
        assert fc.inertia == pytest.approx(0.0, abs=1e-12)
        assert len(set(fc.train_labels.tolist())) == 4

    def test_two_blobs_match_exhaustive_optimum(self):
        points = two_blobs()
        fc = cluster_factor_samples(make_fa(points), 2, seed=3, restarts=5)
        # blob structure recovered
        first, second = fc.train_labels[:10], fc.train_labels[10:]
        assert len(set(first.tolist())) == 1
        assert len(set(second.tolist())) == 1
        assert first[0] != second[0]
        best = exhaustive_best_inertia(points, 2)
        assert fc.inertia == pytest.approx(best, rel=1e-9)

    def test_monotone_inertia_history(self):
        rng = np.random.default_rng(7)
        for seed in range(10):
            points = rng.normal(size=(30, 3))
            fc = cluster_factor_samples(make_fa(points), 4, seed=seed, restarts=1)
            h = fc.inertia_history
            assert all(h[i + 1] <= h[i] * (1 + 1e-12) + 1e-12 for i in range(len(h) - 1))

    def test_deterministic(self):
        points = two_blobs(seed=5)
        a = cluster_factor_samples(make_fa(points), 3, seed=9, restarts=4)
        b = cluster_factor_samples(make_fa(points), 3, seed=9, restarts=4)
        assert a.train_labels.tolist() == b.train_labels.tolist()
        assert np.array_equal(a.centroids, b.centroids)

    def test_empty_cluster_repair(self):
        # starting centroids leave cluster 0 empty: it must get the farthest point
        points = np.array([[0.0, 0.0], [0.5, 0.0], [10.0, 0.0], [10.5, 0.0]])
        centroids = np.array([[1000.0, 1000.0], [0.25, 0.0], [10.25, 0.0]])
        labels, final_centroids, inertia, _ = _lloyd(points.copy(), centroids.copy())
        assert sorted(set(labels.tolist())) == [0, 1, 2]
        assert np.isfinite(inertia)

    def test_l_out_of_range(self):
        points = np.zeros((3, 2))
        with pytest.raises(ValueError):
            cluster_factor_samples(make_fa(points), 4, seed=0)
        with pytest.raises(ValueError):
            cluster_factor_samples(make_fa(points), 0, seed=0)


class TestMetaMatrix:
    def _clustering(self, labels, factor_index=0, sample_ids=None):
        labels = np.asarray(labels, dtype=int)
        return FactorClustering(
            factor_index=factor_index,
            num_clusters=int(labels.max()) + 1,
            centroids=np.zeros((int(labels.max()) + 1, 2)),
            train_labels=labels,
            inertia=0.0,
            sample_ids=sample_ids or [str(i) for i in range(len(labels))],
        )

    def test_shape_and_contents(self):
        m = build_meta_matrix([
            self._clustering([0, 1, 0, 2]),
            self._clustering([1, 1, 0, 0], factor_index=1),
            self._clustering([2, 0, 1, 0], factor_index=2),
        ])
        assert m.values.shape == (3, 4)
        assert m.values[1].tolist() == [1, 1, 0, 0]

    def test_rejects_mismatched_samples(self):
        a = self._clustering([0, 1])
        b = self._clustering([0, 1, 1])
        with pytest.raises(ValueError, match="disagree"):
            build_meta_matrix([a, b])
        c = self._clustering([1, 0], sample_ids=["x", "y"])
        with pytest.raises(ValueError, match="disagree"):
            build_meta_matrix([a, c])

    def test_json_round_trip(self):
        fc = self._clustering([0, 1, 2, 1])
        again = clustering_from_json(clustering_to_json(fc))
        assert again.train_labels.tolist() == fc.train_labels.tolist()
        assert again.num_clusters == fc.num_clusters


class TestFactorPredictor:
    def test_separable_target_fits_exactly(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(60, 3))
        labels = (x[:, 1] > 0).astype(int)
        fc = FactorClustering(0, 2, np.zeros((2, 1)), labels, 0.0,
                              [str(i) for i in range(60)])
        pred = train_factor_predictor(x, fc, ForestConfig(num_trees=10, seed=4))
        assert np.array_equal(pred.forest.predict(x), labels)
        assert pred.oob_accuracy > 0.9

    def test_constant_target(self):
        x = np.random.default_rng(1).normal(size=(20, 3))
        fc = FactorClustering(0, 1, np.zeros((1, 1)), np.zeros(20, dtype=int), 0.0,
                              [str(i) for i in range(20)])
        pred = train_factor_predictor(x, fc, ForestConfig(num_trees=5, seed=0))
        assert pred.forest.predict_one(x[0]) == 0
        assert importance(pred).tolist() == [0.0, 0.0, 0.0]

    def test_meta_feature_prediction_matches_matrix(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, size=(50, 2))
        l0 = (x[:, 0] > 0).astype(int)
        l1 = (x[:, 1] > 0).astype(int)
        preds = []
        for i, labels in enumerate((l0, l1)):
            fc = FactorClustering(i, 2, np.zeros((2, 1)), labels, 0.0,
                                  [str(j) for j in range(50)])
            preds.append(train_factor_predictor(x, fc, ForestConfig(num_trees=15, seed=i)))
        for j in (0, 13, 49):
            meta = predict_meta_feature(preds, x[j])
            assert meta.tolist() == [l0[j], l1[j]]

    def test_deterministic_prediction(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 2))
        fc = FactorClustering(0, 2, np.zeros((2, 1)),
                              (x[:, 0] > 0).astype(int), 0.0,
                              [str(i) for i in range(30)])
        pred = train_factor_predictor(x, fc, ForestConfig(num_trees=7, seed=1))
        row = np.array([0.3, -0.4])
        assert pred.predict_one(row) == pred.predict_one(row)

    def test_dimension_mismatch(self):
        fc = FactorClustering(0, 2, np.zeros((2, 1)), np.array([0, 1]), 0.0, ["0", "1"])
        pred = train_factor_predictor(np.array([[0.0, 1.0], [1.0, 0.0]]), fc,
                                      ForestConfig(num_trees=1, seed=0))
        with pytest.raises(ValueError):
            predict_meta_feature([pred], np.array([1.0, 2.0, 3.0]))


class TestAssignByCentroid:
    def test_training_samples_keep_their_label(self):
        points = two_blobs(seed=4)
        fa = make_fa(points)
        fc = cluster_factor_samples(fa, 2, seed=2, restarts=3)
        for j in range(len(points)):
            assert assign_by_centroid(fa.values[:, j], fc) == fc.train_labels[j]

    def test_tie_breaks_to_smaller_index(self):
        fc = FactorClustering(0, 2, np.array([[1.0, 0.0], [-1.0, 0.0]]),
                              np.array([0, 1]), 0.0, ["0", "1"])
        assert assign_by_centroid(np.array([0.0, 5.0]), fc) == 0

    def test_nearest_centroid(self):
        fc = FactorClustering(0, 3,
                              np.array([[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]]),
                              np.array([0, 1, 2]), 0.0, ["0", "1", "2"])
        assert assign_by_centroid(np.array([9.0, 0.5]), fc) == 2

    def test_dimension_check(self):
        fc = FactorClustering(0, 2, np.zeros((2, 3)), np.array([0, 1]), 0.0, ["0", "1"])
        with pytest.raises(ValueError):
            assign_by_centroid(np.array([1.0, 2.0]), fc)
