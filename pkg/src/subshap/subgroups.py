"""Cluster-combination subgroups: enumeration, selection, retraining, serving.

A subgroup is a non-empty set of cluster ids (noise -1 may participate).
Selection considers complementary 2-partitions of the label set whose
sides both meet sample-size and class thresholds, and keeps the pair with
the largest gap in median bootstrap AUPRC of the global model; the
higher-scoring side is named A. Selected subgroups are retrained with the
same tuning protocol on their own training slice and re-attributed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .attribution import StandardizationStats, standardize_apply, tree_shap
from .clustering import ClusterAssignment, knn_propagate
from .embedding import EmbeddingModel, transform_embedding
from .errors import ConfigError, ValidationError
from .gbdt import Hyperparams, TreeEnsemble, TuningRecord, predict_proba, tune_and_fit
from .seeding import derive_seed
from .stats import FeatureRanking, MetricSamples
from .tabular import FeatureTable, PreprocessConfig, PreprocessReport, preprocess_new_rows


@dataclass(frozen=True)
class SubgroupSpec:
    clusters: frozenset[int]
    name: str

    def __post_init__(self):
        if not self.clusters:
            raise ValidationError("a subgroup needs at least one cluster")

    def sorted_clusters(self) -> list[int]:
        return sorted(self.clusters)

    def to_dict(self) -> dict:
        return {"clusters": self.sorted_clusters(), "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "SubgroupSpec":
        return cls(frozenset(d["clusters"]), d["name"])


@dataclass
class SelectionCriteria:
    min_train_rows: int = 100
    min_test_rows: int = 30
    min_train_positives: int = 5
    require_partition: bool = True

    def __post_init__(self):
        if min(self.min_train_rows, self.min_test_rows, self.min_train_positives) < 1:
            raise ConfigError("selection thresholds must be >= 1")

    def to_dict(self) -> dict:
        return {
            "min_train_rows": self.min_train_rows,
            "min_test_rows": self.min_test_rows,
            "min_train_positives": self.min_train_positives,
            "require_partition": self.require_partition,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionCriteria":
        return cls(**d)


@dataclass
class SubgroupMetrics:
    """Global-model performance on one subgroup's test slice."""

    spec: SubgroupSpec
    n_test: int
    n_test_positives: int
    evaluable: bool
    auprc: float | None = None
    log_loss: float | None = None
    bootstrap: dict[str, MetricSamples] | None = None

    @property
    def boot_auprc_median(self) -> float | None:
        if self.bootstrap and "auprc" in self.bootstrap:
            return self.bootstrap["auprc"].median
        return None


@dataclass
class SubgroupRun:
    """A retrained subgroup model with its evaluation on the matching slice."""

    spec: SubgroupSpec
    model: TreeEnsemble | None
    chosen: Hyperparams | None
    tuning: TuningRecord | None
    train_row_ids: list[int]
    test_row_ids: list[int]
    auprc: float | None = None
    log_loss: float | None = None
    bootstrap: dict[str, MetricSamples] | None = None
    ranking: FeatureRanking | None = None
    failed: bool = False
    error: str = ""


def enumerate_subgroups(m: int, include_noise: bool = False) -> list[SubgroupSpec]:
    """All non-empty subsets of the cluster label set, canonically ordered
    by subset size then lexicographically. Count is 2^(M + noise) - 1."""
    labels: list[int] = ([-1] if include_noise else []) + list(range(m))
    if not labels:
        raise ConfigError("no clusters to enumerate (M = 0 and no noise)")
    specs = []
    index = 0
    for size in range(1, len(labels) + 1):
        for combo in itertools.combinations(labels, size):
            specs.append(SubgroupSpec(frozenset(combo), f"combo{index:03d}"))
            index += 1
    return specs


def _slice_positions(assign: ClusterAssignment, spec: SubgroupSpec) -> np.ndarray:
    return np.flatnonzero(np.isin(assign.labels, spec.sorted_clusters()))


def evaluate_combinations(
    model: TreeEnsemble,
    test_table: FeatureTable,
    test_assign: ClusterAssignment,
    specs: list[SubgroupSpec],
    bootstrap_b: int = 0,
    seed: int = 0,
) -> list[SubgroupMetrics]:
    """Score the global model on every spec's test slice.

    Slices missing a class are flagged unevaluable. When bootstrap_b > 0,
    evaluable slices also get bootstrap replicate metrics.
    """
    X, y, _ = test_table.to_matrix()
    if test_assign.labels.size != y.size:
        raise ValidationError("test labels do not cover the test table")
    scores = predict_proba(model, X)
    out = []
    for spec in specs:
        pos = _slice_positions(test_assign, spec)
        y_s = y[pos]
        n_pos = int(np.sum(y_s == 1))
        evaluable = pos.size > 0 and 0 < n_pos < pos.size
        metrics = SubgroupMetrics(spec, int(pos.size), n_pos, evaluable)
        if evaluable:
            s_s = scores[pos]
            metrics.auprc = stats.auprc(y_s, s_s)
            metrics.log_loss = stats.log_loss(y_s, s_s)
            if bootstrap_b > 0:
                metrics.bootstrap = stats.bootstrap_metrics(
                    y_s, s_s, bootstrap_b,
                    derive_seed(seed, "combination", spec.name),
                )
        out.append(metrics)
    return out


def _side_eligible(
    side: frozenset[int],
    train_assign: ClusterAssignment,
    train_y: np.ndarray,
    metrics_by_clusters: dict[frozenset, SubgroupMetrics],
    criteria: SelectionCriteria,
) -> bool:
    m = metrics_by_clusters.get(side)
    if m is None or not m.evaluable or m.boot_auprc_median is None:
        return False
    train_pos = np.flatnonzero(np.isin(train_assign.labels, sorted(side)))
    if train_pos.size < criteria.min_train_rows:
        return False
    if int(np.sum(train_y[train_pos] == 1)) < criteria.min_train_positives:
        return False
    if m.n_test < criteria.min_test_rows:
        return False
    return True


def select_subgroups(
    train_assign: ClusterAssignment,
    train_y: np.ndarray,
    metrics: list[SubgroupMetrics],
    criteria: SelectionCriteria,
) -> tuple[SubgroupSpec, SubgroupSpec] | None:
    """Pick zero or two subgroups.

    Candidates are complementary 2-partitions of the full label set whose
    sides both pass the criteria; the winner maximizes the absolute gap in
    median bootstrap AUPRC. Returns None when nothing qualifies.
    """
    label_set = sorted(set(train_assign.labels.tolist()))
    if len(label_set) < 2:
        return None
    metrics_by_clusters = {m.spec.clusters: m for m in metrics}

    candidates: list[tuple[frozenset, frozenset]] = []
    if criteria.require_partition:
        others = label_set[1:]
        anchor = label_set[0]
        for size in range(0, len(others)):
            for combo in itertools.combinations(others, size):
                side_a = frozenset([anchor, *combo])
                side_b = frozenset(label_set) - side_a
                if side_b:
                    candidates.append((side_a, side_b))
    else:
        subsets = [
            frozenset(c)
            for size in range(1, len(label_set))
            for c in itertools.combinations(label_set, size)
        ]
        for i, a in enumerate(subsets):
            for b in subsets[i + 1:]:
                if not (a & b):
                    candidates.append((a, b))

    best = None
    for side_a, side_b in candidates:
        if not _side_eligible(side_a, train_assign, train_y, metrics_by_clusters, criteria):
            continue
        if not _side_eligible(side_b, train_assign, train_y, metrics_by_clusters, criteria):
            continue
        med_a = metrics_by_clusters[side_a].boot_auprc_median
        med_b = metrics_by_clusters[side_b].boot_auprc_median
        gap = abs(med_a - med_b)
        if best is None or gap > best[0]:
            high, low = (side_a, side_b) if med_a >= med_b else (side_b, side_a)
            best = (gap, high, low)
    if best is None:
        return None
    return (
        SubgroupSpec(best[1], "A"),
        SubgroupSpec(best[2], "B"),
    )


def retrain_subgroup(
    train_table: FeatureTable,
    train_assign: ClusterAssignment,
    test_table: FeatureTable,
    test_assign: ClusterAssignment,
    spec: SubgroupSpec,
    grid: list[Hyperparams],
    seed: int,
    bootstrap_b: int = 200,
    ranking_k: int = 5,
) -> SubgroupRun:
    """Tune and fit a model on the spec's training slice, evaluate it on
    the matching test slice, and recompute attributions there."""
    train_pos = _slice_positions(train_assign, spec)
    test_pos = _slice_positions(test_assign, spec)
    X_tr, y_tr, feature_names = train_table.to_matrix()
    X_te, y_te, _ = test_table.to_matrix()
    run = SubgroupRun(
        spec=spec,
        model=None,
        chosen=None,
        tuning=None,
        train_row_ids=[int(i) for i in train_table.row_ids[train_pos]],
        test_row_ids=[int(i) for i in test_table.row_ids[test_pos]],
    )
    y_slice = y_tr[train_pos]
    if np.unique(y_slice).size < 2:
        run.failed = True
        run.error = "training slice contains a single class"
        return run
    try:
        model, chosen, tuning = tune_and_fit(
            X_tr[train_pos], y_slice, grid, derive_seed(seed, "retrain", spec.name)
        )
    except (ValidationError, ConfigError) as exc:
        run.failed = True
        run.error = str(exc)
        return run
    run.model = model
    run.chosen = chosen
    run.tuning = tuning

    y_test_slice = y_te[test_pos]
    if test_pos.size and np.unique(y_test_slice).size == 2:
        scores = predict_proba(model, X_te[test_pos])
        run.auprc = stats.auprc(y_test_slice, scores)
        run.log_loss = stats.log_loss(y_test_slice, scores)
        if bootstrap_b > 0:
            run.bootstrap = stats.bootstrap_metrics(
                y_test_slice, scores, bootstrap_b,
                derive_seed(seed, "retrain_bootstrap", spec.name),
            )
        shap = tree_shap(
            model, X_te[test_pos], feature_names, test_table.row_ids[test_pos]
        )
        k = min(ranking_k, len(feature_names))
        run.ranking = stats.top_features(shap.values, feature_names, k)
    return run


@dataclass
class FittedPipeline:
    """Everything the serving path needs, assembled by the run pipeline."""

    preprocess_config: PreprocessConfig
    preprocess_report: PreprocessReport
    model: TreeEnsemble
    feature_names: list[str]
    standardization: StandardizationStats
    embedding_model: EmbeddingModel
    train_assign: ClusterAssignment
    propagation_k: int
    exclude_noise_voters: bool
    selected: tuple[SubgroupSpec, SubgroupSpec] | None
    subgroup_runs: dict[str, SubgroupRun] = field(default_factory=dict)
    uncertainty: dict[str, dict] = field(default_factory=dict)  # per serving name


def score_new_patient(
    fitted: FittedPipeline, row_table: FeatureTable
) -> tuple[str, float, dict]:
    """Assign a preprocessed patient row to its subgroup and score it with
    the matching model (global when selection was empty or retraining
    failed). Returns (subgroup name, probability, uncertainty summary)."""
    feats = preprocess_new_rows(row_table, fitted.preprocess_config, fitted.preprocess_report)
    if feats.feature_names() != fitted.feature_names:
        raise ValidationError("row features do not match the fitted schema")
    X, _ = feats.features_matrix()

    shap = tree_shap(fitted.model, X, fitted.feature_names)
    z = standardize_apply(shap.values, fitted.standardization)
    emb = transform_embedding(fitted.embedding_model, z)
    assign = knn_propagate(
        fitted.embedding_model.embedding.coords,
        fitted.train_assign.labels,
        emb.coords,
        fitted.propagation_k,
        fitted.exclude_noise_voters,
    )
    cluster = int(assign.labels[0])

    serving = "global"
    if fitted.selected is not None:
        for spec in fitted.selected:
            if cluster in spec.clusters:
                run = fitted.subgroup_runs.get(spec.name)
                if run is not None and not run.failed and run.model is not None:
                    serving = spec.name
                break

    model = fitted.model if serving == "global" else fitted.subgroup_runs[serving].model
    probability = float(predict_proba(model, X)[0])
    summary = dict(fitted.uncertainty.get(serving, {}))
    summary.update(
        {
            "serving_model": serving,
            "assigned_cluster": cluster,
            "membership_strength": float(assign.strengths[0]),
            "probability": probability,
        }
    )
    return serving, probability, summary
