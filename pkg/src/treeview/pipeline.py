"""Staged pipeline: train -> factorize -> surrogate -> explain.

Each stage reads the artifact written by the previous one, adds its own
results, and saves the bundle back to disk as canonical JSON (sorted keys),
so identical configs and seeds produce byte-identical artifacts.  A single
global seed fans out to per-stage seeds through a stable hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import factors as fz
from . import meta as mt
from . import mlp
from .data import (Dataset, DatasetError, ScalerParams, SplitSpec, apply_scaler,
                   load_csv, split, standardize)
from .forest import ForestConfig
from .surrogate import (DecisionTreeSurrogate, EvaluationReport, TreeConfig, evaluate,
                        fit_surrogate, tree_from_json, tree_to_json)
from .view import ExplainerBundle, RenderConfig, TreeViewLayout, trace_explanation

ARTIFACT_VERSION = 1


class ArtifactError(ValueError):
    """Artifact missing, stage out of order, or internally inconsistent."""


def stage_seed(global_seed: int, stage: str) -> int:
    """Stable 32-bit seed derived from the global seed and a stage name."""
    digest = hashlib.sha256(f"{stage}:{global_seed}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _from_dict(cls, obj: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise DatasetError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**obj)


@dataclass(frozen=True)
class DatasetConfig:
    path: str
    label_column: str | int = "class"
    has_header: bool = True


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    stratified: bool = True


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.1
    dropout_rate: float = 0.1
    momentum: float = 0.9


@dataclass(frozen=True)
class FactorSection:
    num_factors: int | None = None  # None -> silhouette selection
    k_min: int = 2
    k_max: int = 12


@dataclass(frozen=True)
class MetaSection:
    clusters_per_factor: int | None = None  # None -> one per class
    restarts: int = 10


@dataclass(frozen=True)
class ForestSection:
    num_trees: int = 25
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None


@dataclass(frozen=True)
class TreeSection:
    max_depth: int | None = None
    min_leaf: int = 5
    min_impurity_decrease: float = 0.0


@dataclass(frozen=True)
class RenderSection:
    cell_size: int = 36
    top_features: int = 3
    rejection_threshold: float = 0.05
    palette: str = "blue"


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetConfig
    split: SplitConfig = field(default_factory=SplitConfig)
    hidden_widths: tuple[int, ...] = (128, 64, 64)
    train: TrainSection = field(default_factory=TrainSection)
    layers: str | list[int] = "all"
    factors: FactorSection = field(default_factory=FactorSection)
    meta: MetaSection = field(default_factory=MetaSection)
    forest: ForestSection = field(default_factory=ForestSection)
    tree: TreeSection = field(default_factory=TreeSection)
    render: RenderSection = field(default_factory=RenderSection)
    seed: int = 0

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        obj = dict(obj)
        sections = {
            "dataset": DatasetConfig,
            "split": SplitConfig,
            "train": TrainSection,
            "factors": FactorSection,
            "meta": MetaSection,
            "forest": ForestSection,
            "tree": TreeSection,
            "render": RenderSection,
        }
        if "dataset" not in obj:
            raise DatasetError("config is missing the 'dataset' section")
        kwargs = {}
        for key, value in obj.items():
            if key in sections:
                kwargs[key] = _from_dict(sections[key], value, f"config section {key!r}")
            elif key == "hidden_widths":
                kwargs[key] = tuple(int(w) for w in value)
            elif key in ("layers", "seed"):
                kwargs[key] = value
            else:
                raise DatasetError(f"unknown config key {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise DatasetError(f"config file not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden_widths"] = list(self.hidden_widths)
        return out

    def render_config(self) -> RenderConfig:
        return RenderConfig(**asdict(self.render))


def save_artifact(artifact: dict, path) -> None:
    Path(path).write_text(json.dumps(artifact, sort_keys=True), encoding="utf-8")


def load_artifact(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact file not found: {path}")
    try:
        artifact = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"artifact is not valid JSON: {exc}") from None
    validate_artifact(artifact)
    return artifact


def validate_artifact(artifact: dict) -> None:
    """Dimensional consistency checks, run before any stage computation."""
    if artifact.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(
            f"artifact version {artifact.get('version')!r} not supported "
            f"(expected {ARTIFACT_VERSION})"
        )
    stages = artifact.get("stages", [])
    if "train" not in stages:
        raise ArtifactError("artifact has no train stage")
    schema = artifact["schema"]
    d = len(schema["feature_names"])
    c = len(schema["class_names"])
    if len(artifact["scaler"]["means"]) != d:
        raise ArtifactError("scaler width does not match schema")
    model = artifact["model"]
    if model["input_dim"] != d:
        raise ArtifactError("model input_dim does not match schema")
    if model["layers"][-1]["width"] != c:
        raise ArtifactError("model output width does not match class count")
    n_neurons = len(artifact["activations"]["neuron_ids"])
    t_train = len(artifact["activations"]["sample_ids"])
    if len(artifact["split"]["train_ids"]) != t_train:
        raise ArtifactError("activation columns do not match train split")

    if "factorize" in stages:
        part = artifact["factorization"]
        k = part["num_factors"]
        if sum(len(f) for f in part["factors"]) != n_neurons:
            raise ArtifactError("factor partition does not cover all neurons")
        for name, count in (
            ("clusterings", len(artifact["clusterings"])),
            ("predictors", len(artifact["predictors"])),
            ("importances", len(artifact["importances"])),
        ):
            if count != k:
                raise ArtifactError(f"{name} count {count} does not match K={k}")
        meta_values = artifact["meta_matrix"]
        if len(meta_values) != k or (k and len(meta_values[0]) != t_train):
            raise ArtifactError("meta matrix shape does not match K x T")
        for imp in artifact["importances"]:
            if len(imp) != d:
                raise ArtifactError("importance vector width does not match schema")

    if "surrogate" in stages:
        tree = artifact["surrogate"]
        if tree["num_classes"] != c:
            raise ArtifactError("surrogate class count does not match schema")
        if tree["num_factors"] != artifact["factorization"]["num_factors"]:
            raise ArtifactError("surrogate factor count does not match partition")


def _require_stage(artifact: dict, stage: str) -> None:
    if stage not in artifact.get("stages", []):
        raise ArtifactError(f"artifact is missing the {stage!r} stage; run it first")


def _load_splits(artifact: dict, cfg: PipelineConfig):
    """Reload the dataset and rebuild the standardized train/test splits."""
    dataset = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.has_header)
    if dataset.schema.feature_names != artifact["schema"]["feature_names"] or \
            dataset.schema.class_names != artifact["schema"]["class_names"]:
        raise ArtifactError("dataset schema changed since the artifact was written")
    by_id = {sid: i for i, sid in enumerate(dataset.sample_ids)}
    try:
        train_idx = [by_id[sid] for sid in artifact["split"]["train_ids"]]
        test_idx = [by_id[sid] for sid in artifact["split"]["test_ids"]]
    except KeyError as exc:
        raise ArtifactError(f"dataset is missing sample id {exc.args[0]!r}") from None
    scaler = ScalerParams.from_json(artifact["scaler"])
    train_std = apply_scaler(dataset.take(train_idx), scaler)
    test_std = apply_scaler(dataset.take(test_idx), scaler)
    return dataset, train_std, test_std, scaler


def _activations_to_json(am: mlp.ActivationMatrix) -> dict:
    return {
        "neuron_ids": [f"{layer}:{unit}" for layer, unit in am.neuron_ids],
        "sample_ids": list(am.sample_ids),
        "values": am.values.tolist(),
    }


def _activations_from_json(obj: dict) -> mlp.ActivationMatrix:
    neuron_ids = []
    for token in obj["neuron_ids"]:
        layer, _, unit = token.partition(":")
        neuron_ids.append((int(layer), int(unit)))
    return mlp.ActivationMatrix(
        values=np.array(obj["values"], dtype=float),
        neuron_ids=neuron_ids,
        sample_ids=list(obj["sample_ids"]),
    )


def run_train(cfg: PipelineConfig) -> dict:
    """Stage 1: split, standardize, train the network, extract activations."""
    dataset = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.has_header)
    spec = SplitSpec(
        train_fraction=cfg.split.train_fraction,
        seed=stage_seed(cfg.seed, "split"),
        stratified=cfg.split.stratified,
    )
    train_ds, test_ds = split(dataset, spec)
    train_std, scaler = standardize(train_ds)
    test_std = apply_scaler(test_ds, scaler)

    layer_specs = [mlp.LayerSpec(w, "relu") for w in cfg.hidden_widths]
    layer_specs.append(mlp.LayerSpec(dataset.schema.num_classes, "softmax"))
    model = mlp.init_model(dataset.schema.num_features, layer_specs,
                           stage_seed(cfg.seed, "init"))
    train_cfg = mlp.TrainConfig(
        epochs=cfg.train.epochs,
        batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate,
        dropout_rate=cfg.train.dropout_rate,
        momentum=cfg.train.momentum,
        seed=stage_seed(cfg.seed, "train"),
    )
    report = mlp.train(model, train_std, train_cfg)
    activations = mlp.extract_activations(model, train_std, cfg.layers)

    train_acc = float(np.mean(mlp.predict(model, train_std.features) == train_std.labels))
    test_acc = float(np.mean(mlp.predict(model, test_std.features) == test_std.labels))

    return {
        "version": ARTIFACT_VERSION,
        "stages": ["train"],
        "config": cfg.to_dict(),
        "schema": {
            "feature_names": dataset.schema.feature_names,
            "class_names": dataset.schema.class_names,
        },
        "split": {"train_ids": train_ds.sample_ids, "test_ids": test_ds.sample_ids},
        "scaler": scaler.to_json(),
        "model": mlp.model_to_json(model),
        "train_report": report.to_json(),
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "activations": _activations_to_json(activations),
    }


def run_factorize(artifact: dict, cfg: PipelineConfig) -> dict:
    """Stage 2: partition neurons, cluster samples per factor, fit predictors."""
    _require_stage(artifact, "train")
    am = _activations_from_json(artifact["activations"])
    _, train_std, test_std, _ = _load_splits(artifact, cfg)

    dm = fz.neuron_distance(am)
    n = dm.num_neurons
    if cfg.factors.num_factors is not None:
        k = cfg.factors.num_factors
    elif n < 3:
        k = 1
    else:
        k_max = min(cfg.factors.k_max, n - 1)
        k_min = min(cfg.factors.k_min, k_max)
        k = fz.select_num_factors(dm, k_min, k_max)
    partition = fz.cluster_neurons(dm, k, layer_selector=str(cfg.layers))

    num_classes = len(artifact["schema"]["class_names"])
    l_default = cfg.meta.clusters_per_factor or num_classes
    l_clusters = min(l_default, am.num_samples)

    model = mlp.model_from_json(artifact["model"])
    test_am = mlp.extract_activations(model, test_std, cfg.layers)

    clusterings = []
    predictors = []
    importances = []
    agreement = []
    for i in range(k):
        fa = fz.factor_activations(am, partition, i)
        fc = mt.cluster_factor_samples(
            fa, l_clusters,
            seed=stage_seed(cfg.seed, f"meta:{i}"),
            restarts=cfg.meta.restarts,
            factor_index=i,
        )
        forest_cfg = ForestConfig(
            num_trees=cfg.forest.num_trees,
            max_depth=cfg.forest.max_depth,
            min_leaf=cfg.forest.min_leaf,
            features_per_split=cfg.forest.features_per_split,
            seed=stage_seed(cfg.seed, f"forest:{i}"),
        )
        pred = mt.train_factor_predictor(train_std.features, fc, forest_cfg)
        clusterings.append(fc)
        predictors.append(pred)
        importances.append(mt.importance(pred))

        test_fa = fz.factor_activations(test_am, partition, i)
        hits = sum(
            pred.predict_one(test_std.features[j]) == mt.assign_by_centroid(test_fa.values[:, j], fc)
            for j in range(test_std.num_samples)
        )
        agreement.append(hits / max(test_std.num_samples, 1))

    meta_matrix = mt.build_meta_matrix(clusterings)
    out = dict(artifact)
    if "factorize" not in out["stages"]:
        out["stages"] = out["stages"] + ["factorize"]
    out["config"] = cfg.to_dict()
    out["factorization"] = fz.partition_to_json(partition)
    out["clusterings"] = [mt.clustering_to_json(fc) for fc in clusterings]
    out["predictors"] = [mt.predictor_to_json(p) for p in predictors]
    out["importances"] = [imp.tolist() for imp in importances]
    out["meta_matrix"] = meta_matrix.values.tolist()
    out["diagnostics"] = {"centroid_agreement": agreement}
    validate_artifact(out)
    return out


def run_surrogate(artifact: dict, cfg: PipelineConfig) -> dict:
    """Stage 3: fit the decision-tree surrogate and evaluate the pipeline."""
    _require_stage(artifact, "factorize")
    _, train_std, test_std, _ = _load_splits(artifact, cfg)
    meta_matrix = mt.MetaFeatureMatrix(
        values=np.array(artifact["meta_matrix"], dtype=int),
        sample_ids=list(artifact["activations"]["sample_ids"]),
    )
    tree_cfg = TreeConfig(
        max_depth=cfg.tree.max_depth,
        min_leaf=cfg.tree.min_leaf,
        min_impurity_decrease=cfg.tree.min_impurity_decrease,
    )
    num_classes = len(artifact["schema"]["class_names"])
    tree = fit_surrogate(meta_matrix, train_std.labels, tree_cfg, num_classes)

    predictors = [mt.predictor_from_json(p) for p in artifact["predictors"]]
    model = mlp.model_from_json(artifact["model"])
    report = evaluate(tree, predictors, model, test_std)

    out = dict(artifact)
    if "surrogate" not in out["stages"]:
        out["stages"] = out["stages"] + ["surrogate"]
    out["config"] = cfg.to_dict()
    out["surrogate"] = tree_to_json(tree)
    out["evaluation"] = report.to_json()
    validate_artifact(out)
    return out


def explainer_bundle(artifact: dict) -> ExplainerBundle:
    _require_stage(artifact, "surrogate")
    return ExplainerBundle(
        predictors=[mt.predictor_from_json(p) for p in artifact["predictors"]],
        tree=tree_from_json(artifact["surrogate"]),
        importances=[np.array(imp, dtype=float) for imp in artifact["importances"]],
        feature_names=list(artifact["schema"]["feature_names"]),
        class_names=list(artifact["schema"]["class_names"]),
    )


def explain_sample(artifact: dict, cfg: PipelineConfig, sample_id: str) -> TreeViewLayout:
    """Explain one dataset sample by id; its true label feeds the footer."""
    bundle = explainer_bundle(artifact)
    dataset = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.has_header)
    idx = dataset.index_of(sample_id)
    scaler = ScalerParams.from_json(artifact["scaler"])
    row = (dataset.features[idx] - scaler.means) / scaler.stds
    layout = trace_explanation(row, int(dataset.labels[idx]), bundle, cfg.render_config())
    layout.sample_id = sample_id
    return layout


def explain_features(artifact: dict, cfg: PipelineConfig, raw_features: list[float],
                     true_label: int | None = None) -> TreeViewLayout:
    """Explain a raw (unstandardized) feature vector."""
    bundle = explainer_bundle(artifact)
    d = len(artifact["schema"]["feature_names"])
    if len(raw_features) != d:
        raise DatasetError(f"expected {d} feature values, got {len(raw_features)}")
    scaler = ScalerParams.from_json(artifact["scaler"])
    row = (np.asarray(raw_features, dtype=float) - scaler.means) / scaler.stds
    return trace_explanation(row, true_label, bundle, cfg.render_config())
