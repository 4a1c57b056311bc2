import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from treeview.data import Dataset, DatasetSchema


def make_blob_dataset(num_classes=3, per_class=40, dim=4, spread=0.5, seed=0,
                      class_names=None):
    """Well-separated Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 3.0, size=(num_classes, dim))
    features = np.vstack([
        rng.normal(centers[c], spread, size=(per_class, dim))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), per_class)
    schema = DatasetSchema(
        feature_names=[f"f{j}" for j in range(dim)],
        class_names=class_names or [f"class{c}" for c in range(num_classes)],
    )
    return Dataset(
        features=features,
        labels=labels,
        schema=schema,
        sample_ids=[str(i) for i in range(len(labels))],
    )


@pytest.fixture(scope="session")
def blob_dataset():
    return make_blob_dataset()


@pytest.fixture(scope="session")
def small_pipeline():
    """A tiny but fully trained pipeline shared by explanation tests."""
    import treeview as tv
    from treeview.factors import factor_activations
    from treeview.forest import ForestConfig
    from treeview.view import ExplainerBundle

    dataset = make_blob_dataset(num_classes=4, per_class=30, dim=5, seed=3)
    train, test = tv.split(dataset, tv.SplitSpec(0.75, seed=11))
    train_s, scaler = tv.standardize(train)
    test_s = tv.apply_scaler(test, scaler)

    model = tv.init_model(5, [tv.LayerSpec(16, "relu"), tv.LayerSpec(8, "relu"),
                              tv.LayerSpec(4, "softmax")], seed=5)
    tv.train(model, train_s, tv.TrainConfig(epochs=80, batch_size=15,
                                            learning_rate=0.2, dropout_rate=0.1, seed=7))

    am = tv.extract_activations(model, train_s)
    dm = tv.neuron_distance(am)
    partition = tv.cluster_neurons(dm, 3)
    clusterings, predictors, importances = [], [], []
    for i in range(3):
        fa = factor_activations(am, partition, i)
        fc = tv.cluster_factor_samples(fa, 4, seed=100 + i, restarts=5, factor_index=i)
        pred = tv.train_factor_predictor(train_s.features, fc,
                                         ForestConfig(num_trees=15, seed=200 + i))
        clusterings.append(fc)
        predictors.append(pred)
        importances.append(tv.importance(pred))
    meta = tv.build_meta_matrix(clusterings)
    tree = tv.fit_surrogate(meta, train_s.labels, tv.TreeConfig(min_leaf=2),
                            num_classes=4)
    bundle = ExplainerBundle(
        predictors=predictors,
        tree=tree,
        importances=importances,
        feature_names=dataset.schema.feature_names,
        class_names=dataset.schema.class_names,
    )
    return {
        "dataset": dataset,
        "train": train_s,
        "test": test_s,
        "model": model,
        "partition": partition,
        "clusterings": clusterings,
        "meta": meta,
        "tree": tree,
        "bundle": bundle,
    }
