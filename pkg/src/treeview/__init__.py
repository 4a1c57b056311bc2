"""Decision-tree surrogate explanations of fully connected networks.

The pipeline trains a rectifier network, groups its hidden neurons into
factors of similarly behaving units, clusters samples inside every factor,
and fits a decision tree over the resulting cluster-label meta-features.
Per-sample TreeView grids then show how class hypotheses are rejected one
by one along the tree's decision path.
"""

from .data import (Dataset, DatasetError, DatasetSchema, ScalerParams, SplitSpec,
                   apply_scaler, invert_scaler, load_csv, split, standardize)
from .factors import (FactorPartition, NeuronDistanceMatrix, cluster_neurons,
                      factor_activations, neuron_distance, select_num_factors)
from .forest import ForestConfig, RandomForest, fit_forest
from .meta import (FactorClustering, FactorPredictor, MetaFeatureMatrix,
                   assign_by_centroid, build_meta_matrix, cluster_factor_samples,
                   importance, predict_meta_feature, train_factor_predictor)
from .mlp import (ActivationMatrix, LayerSpec, MlpModel, TrainConfig, TrainReport,
                  TrainingDiverged, export_activations, extract_activations,
                  import_activations, init_model, predict, predict_proba, train)
from .pipeline import (ArtifactError, PipelineConfig, explain_features, explain_sample,
                       load_artifact, run_factorize, run_surrogate, run_train,
                       save_artifact)
from .surrogate import (DecisionPath, DecisionTreeSurrogate, EvaluationReport,
                        TreeConfig, decision_path, evaluate, fit_surrogate,
                        surrogate_predict)
from .view import (ExplainerBundle, RejectionEvent, RenderConfig, TreeViewLayout,
                   compute_rejections, render_svg, render_text, trace_explanation)

__version__ = "0.1.0"
