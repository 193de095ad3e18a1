"""Subgroup discovery from model attributions, with subgroup retraining.

The package turns a tabular cohort into: a preprocessed train/test split,
a tuned gradient-boosted classifier, exact per-row attribution values, a
2D embedding of the standardized attributions, density clusters, a zero-
or-two subgroup selection, retrained subgroup models, and bootstrap
comparisons of pooled versus subgroup performance.
"""

from .clustering import ClusterAssignment, HdbscanConfig, hdbscan, knn_propagate
from .embedding import UmapConfig, fit_embedding, knn_graph, transform_embedding
from .gbdt import Hyperparams, TreeEnsemble, fit, predict_margin, predict_proba, tune_and_fit
from .attribution import ShapMatrix, standardize_apply, standardize_fit, tree_shap
from .pipeline import RunConfig, run_pipeline, score_row, verify_artifacts
from .stats import auprc, bootstrap_metrics, chi_squared_test, log_loss, mann_whitney_u
from .subgroups import (
    SelectionCriteria,
    SubgroupSpec,
    enumerate_subgroups,
    retrain_subgroup,
    score_new_patient,
    select_subgroups,
)
from .tabular import (
    FeatureTable,
    PreprocessConfig,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    preprocess,
    write_csv,
)

__version__ = "0.1.0"
