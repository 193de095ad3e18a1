"""End-to-end orchestration: one config in, an artifact directory out.

Stage order: load -> preprocess -> global model -> attributions ->
standardize -> embed -> cluster -> propagate -> combination evaluation ->
selection -> subgroup retraining -> metric bundles -> comparisons ->
rankings -> report. Every stage's randomness derives from the root seed
and the stage name, so a rerun with the same config is byte-identical.
Artifacts live under stable subdirectories; report.json carries a sha256
manifest of every other file written.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import stats
from .attribution import (
    ShapMatrix,
    StandardizationStats,
    standardize_apply,
    standardize_fit,
    tree_shap,
)
from .clustering import ClusterAssignment, HdbscanConfig, hdbscan, knn_propagate
from .embedding import Embedding2D, EmbeddingModel, UmapConfig, fit_embedding, transform_embedding
from .errors import ConfigError, StageError, ValidationError
from .gbdt import (
    Hyperparams,
    TreeEnsemble,
    TuningRecord,
    default_grid,
    predict_proba,
    tune_and_fit,
)
from .seeding import derive_seed
from .stats import FeatureRanking, MetricSamples
from .subgroups import (
    FittedPipeline,
    SelectionCriteria,
    SubgroupRun,
    SubgroupSpec,
    enumerate_subgroups,
    evaluate_combinations,
    retrain_subgroup,
    score_new_patient,
    select_subgroups,
)
from .tabular import (
    CATEGORICAL,
    CONTINUOUS,
    TARGET,
    FeatureTable,
    PreprocessConfig,
    PreprocessReport,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    load_schema,
    preprocess,
    schema_of,
    write_csv,
)

MAX_ENUMERATED_SUBGROUPS = 4095
SERVING_SLICES = ("all", "A", "B", "A_retrained", "B_retrained")


@dataclass
class RunConfig:
    seed: int
    csv_path: str | None = None
    schema_path: str | None = None
    synthetic: SyntheticSpec | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    grid: list[Hyperparams] = field(default_factory=default_grid)
    umap: UmapConfig = field(default_factory=UmapConfig)
    hdbscan: HdbscanConfig = field(default_factory=HdbscanConfig)
    propagation_k: int = 5
    exclude_noise_voters: bool = False
    criteria: SelectionCriteria = field(default_factory=SelectionCriteria)
    bootstrap_b: int = 200
    ranking_k: int = 5

    def __post_init__(self):
        has_csv = self.csv_path is not None
        if has_csv == (self.synthetic is not None):
            raise ConfigError("config needs exactly one input source (csv or synthetic)")
        if has_csv and self.schema_path is None:
            raise ConfigError("csv input requires a schema file")
        if self.propagation_k < 1:
            raise ConfigError("propagation_k must be >= 1")
        if self.bootstrap_b < 1:
            raise ConfigError("bootstrap_b must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "csv_path": self.csv_path,
            "schema_path": self.schema_path,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "preprocess": self.preprocess.to_dict(),
            "grid": [hp.to_dict() for hp in self.grid],
            "umap": self.umap.to_dict(),
            "hdbscan": self.hdbscan.to_dict(),
            "propagation_k": self.propagation_k,
            "exclude_noise_voters": self.exclude_noise_voters,
            "criteria": self.criteria.to_dict(),
            "bootstrap_b": self.bootstrap_b,
            "ranking_k": self.ranking_k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            seed=d["seed"],
            csv_path=d.get("csv_path"),
            schema_path=d.get("schema_path"),
            synthetic=SyntheticSpec.from_dict(d["synthetic"]) if d.get("synthetic") else None,
            preprocess=PreprocessConfig.from_dict(d.get("preprocess", {})),
            grid=(
                [Hyperparams.from_dict(g) for g in d["grid"]]
                if d.get("grid")
                else default_grid()
            ),
            umap=UmapConfig.from_dict(d.get("umap", {})),
            hdbscan=HdbscanConfig.from_dict(d.get("hdbscan", {})),
            propagation_k=d.get("propagation_k", 5),
            exclude_noise_voters=d.get("exclude_noise_voters", False),
            criteria=SelectionCriteria.from_dict(d.get("criteria", {})),
            bootstrap_b=d.get("bootstrap_b", 200),
            ranking_k=d.get("ranking_k", 5),
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _write_rows_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _fmt(value: float) -> str:
    return repr(float(value))


def write_assignment_csv(path: Path, row_ids, assign: ClusterAssignment) -> None:
    _write_rows_csv(
        path,
        ["row_id", "label", "strength"],
        [
            [int(r), int(l), _fmt(s)]
            for r, l, s in zip(row_ids, assign.labels, assign.strengths)
        ],
    )


def read_assignment_csv(path: Path) -> tuple[np.ndarray, ClusterAssignment]:
    ids, labels, strengths = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            strengths.append(float(row[2]))
    labels = np.array(labels, dtype=np.int64)
    n_clusters = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    return np.array(ids), ClusterAssignment(labels, n_clusters, np.array(strengths))


def write_embedding_csv(path: Path, row_ids, coords: np.ndarray) -> None:
    _write_rows_csv(
        path,
        ["row_id", "x", "y"],
        [
            [int(r), _fmt(xy[0]), _fmt(xy[1])]
            for r, xy in zip(row_ids, coords)
        ],
    )


def read_embedding_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    ids, coords = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ids.append(int(row[0]))
            coords.append([float(row[1]), float(row[2])])
    return np.array(ids), np.array(coords)


def _metric_samples_dict(samples: MetricSamples) -> dict:
    return {
        "median": samples.median,
        "iqr": samples.iqr,
        "seed": samples.seed,
        "skipped_replicates": samples.skipped_replicates,
        "n_replicates": len(samples.values),
    }


def _bundle(y: np.ndarray, scores: np.ndarray, b: int, seed: int) -> dict:
    boot = stats.bootstrap_metrics(y, scores, b, seed)
    return {
        "n": int(y.size),
        "n_positives": int(np.sum(y == 1)),
        "auprc": stats.auprc(y, scores),
        "log_loss": stats.log_loss(y, scores),
        "bootstrap": {m: _metric_samples_dict(s) for m, s in boot.items()},
        "_samples": boot,
    }


def _ranking_list(r: FeatureRanking) -> list[list]:
    return [[name, score] for name, score in r.entries]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def build_manifest(outdir: Path) -> dict[str, str]:
    manifest = {}
    for p in sorted(outdir.rglob("*")):
        if p.is_file() and p.name != "report.json":
            manifest[p.relative_to(outdir).as_posix()] = _sha256(p)
    return manifest


def run_pipeline(config: RunConfig, outdir: str | Path) -> dict:
    """Execute every stage, persist artifacts, and return the run report.

    On a stage failure the partial artifacts stay in place, report.json
    records the failing stage, and StageError propagates.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report: dict = {"seed": config.seed, "warnings": [], "failure": None}
    stage = "init"
    _write_json(outdir / "config.json", config.to_dict())

    try:
        stage = "load"
        if config.synthetic is not None:
            table, planted, warnings = generate_synthetic(config.synthetic)
            report["warnings"].extend(warnings)
            _write_rows_csv(
                outdir / "preprocess" / "planted.csv",
                ["row_id", "subgroup"],
                [[int(i), int(g)] for i, g in zip(table.row_ids, planted)],
            )
        else:
            schema = load_schema(config.schema_path)
            table = load_csv(config.csv_path, schema)
        _write_json(
            outdir / "preprocess" / "input_schema.json",
            [{"name": n, "kind": k} for n, k in schema_of(table)],
        )

        stage = "preprocess"
        pre_cfg = replace(config.preprocess, seed=derive_seed(config.seed, "preprocess"))
        train, test, pre_report = preprocess(table, pre_cfg)
        write_csv(train, outdir / "preprocess" / "train.csv")
        write_csv(test, outdir / "preprocess" / "test.csv")
        _write_json(outdir / "preprocess" / "report.json", pre_report.to_dict())
        report["preprocess"] = {
            "n_train": train.n_rows,
            "n_test": test.n_rows,
            "retained": pre_report.retained,
            "excluded": [
                {"name": e.name, "reason": e.reason} for e in pre_report.excluded
            ],
        }

        stage = "train_global"
        X_tr, y_tr, feature_names = train.to_matrix()
        X_te, y_te, _ = test.to_matrix()
        model, chosen, tuning = tune_and_fit(
            X_tr, y_tr, config.grid, derive_seed(config.seed, "model")
        )
        model.save(outdir / "model" / "global.json")
        _write_json(outdir / "model" / "tuning.json", tuning.to_dict())
        report["chosen_hyperparams"] = chosen.to_dict()

        stage = "shap"
        shap_train = tree_shap(model, X_tr, feature_names, train.row_ids)
        shap_test = tree_shap(model, X_te, feature_names, test.row_ids)
        shap_train.save(outdir / "shap" / "train.csv", outdir / "shap" / "train.json")
        shap_test.save(outdir / "shap" / "test.csv", outdir / "shap" / "test.json")

        stage = "standardize"
        std_stats = standardize_fit(shap_train.values)
        z_train = standardize_apply(shap_train.values, std_stats)
        z_test = standardize_apply(shap_test.values, std_stats)
        _write_json(outdir / "shap" / "standardization.json", std_stats.to_dict())

        stage = "embed"
        umap_cfg = replace(config.umap, seed=derive_seed(config.seed, "embedding"))
        emb_model = fit_embedding(z_train, umap_cfg)
        emb_test = transform_embedding(emb_model, z_test)
        write_embedding_csv(
            outdir / "embedding" / "train.csv", train.row_ids, emb_model.embedding.coords
        )
        write_embedding_csv(outdir / "embedding" / "test.csv", test.row_ids, emb_test.coords)
        report["embedding"] = {
            "sigma_fallbacks": emb_model.sigma_fallbacks,
            "curve_a": emb_model.curve_a,
            "curve_b": emb_model.curve_b,
        }

        stage = "cluster"
        train_assign = hdbscan(emb_model.embedding.coords, config.hdbscan)
        write_assignment_csv(outdir / "clusters" / "train.csv", train.row_ids, train_assign)

        stage = "propagate"
        test_assign = knn_propagate(
            emb_model.embedding.coords,
            train_assign.labels,
            emb_test.coords,
            min(config.propagation_k, train.n_rows),
            config.exclude_noise_voters,
        )
        write_assignment_csv(outdir / "clusters" / "test.csv", test.row_ids, test_assign)
        label_list = sorted(set(train_assign.labels.tolist()))
        report["clusters"] = {
            "n_clusters": train_assign.n_clusters,
            "train_sizes": {
                str(l): int(np.sum(train_assign.labels == l)) for l in label_list
            },
            "test_sizes": {
                str(l): int(np.sum(test_assign.labels == l)) for l in label_list
            },
        }

        stage = "evaluate_combinations"
        include_noise = bool(np.any(train_assign.labels == -1))
        n_specs = 2 ** (train_assign.n_clusters + int(include_noise)) - 1
        if n_specs > MAX_ENUMERATED_SUBGROUPS:
            raise ValidationError(
                f"{n_specs} cluster combinations exceed the supported maximum"
            )
        specs = enumerate_subgroups(train_assign.n_clusters, include_noise)
        combo_metrics = evaluate_combinations(
            model, test, test_assign, specs,
            bootstrap_b=config.bootstrap_b,
            seed=derive_seed(config.seed, "combinations"),
        )
        _write_json(
            outdir / "subgroups" / "combinations.json",
            [
                {
                    "clusters": m.spec.sorted_clusters(),
                    "name": m.spec.name,
                    "n_test": m.n_test,
                    "n_test_positives": m.n_test_positives,
                    "evaluable": m.evaluable,
                    "auprc": m.auprc,
                    "log_loss": m.log_loss,
                    "boot_auprc_median": m.boot_auprc_median,
                }
                for m in combo_metrics
            ],
        )

        stage = "select"
        selected = select_subgroups(train_assign, y_tr, combo_metrics, config.criteria)
        _write_json(
            outdir / "subgroups" / "selection.json",
            None if selected is None else [s.to_dict() for s in selected],
        )
        report["selection"] = (
            None if selected is None else {s.name: s.sorted_clusters() for s in selected}
        )

        stage = "retrain"
        runs: dict[str, SubgroupRun] = {}
        if selected is not None:
            for spec in selected:
                run = retrain_subgroup(
                    train, train_assign, test, test_assign, spec, config.grid,
                    derive_seed(config.seed, "subgroup", spec.name),
                    bootstrap_b=config.bootstrap_b,
                    ranking_k=config.ranking_k,
                )
                runs[spec.name] = run
                run_info = {
                    "clusters": spec.sorted_clusters(),
                    "failed": run.failed,
                    "error": run.error,
                    "n_train": len(run.train_row_ids),
                    "n_test": len(run.test_row_ids),
                    "auprc": run.auprc,
                    "log_loss": run.log_loss,
                    "chosen_hyperparams": run.chosen.to_dict() if run.chosen else None,
                    "train_row_ids": run.train_row_ids,
                    "test_row_ids": run.test_row_ids,
                }
                _write_json(outdir / "subgroups" / f"run_{spec.name}.json", run_info)
                if run.model is not None:
                    run.model.save(outdir / "subgroups" / f"model_{spec.name}.json")
        report["subgroup_runs"] = {
            name: {"failed": r.failed, "error": r.error} for name, r in runs.items()
        }

        stage = "metrics"
        scores_global = predict_proba(model, X_te)
        serving_scores = scores_global.copy()
        serving_name = np.array(["global"] * test.n_rows, dtype=object)
        slices: dict[str, np.ndarray] = {"all": np.arange(test.n_rows)}
        if selected is not None:
            for spec in selected:
                positions = np.flatnonzero(
                    np.isin(test_assign.labels, spec.sorted_clusters())
                )
                slices[spec.name] = positions
                run = runs[spec.name]
                if run.model is not None and not run.failed and positions.size:
                    serving_scores[positions] = predict_proba(run.model, X_te[positions])
                    serving_name[positions] = spec.name

        _write_rows_csv(
            outdir / "subgroups" / "scores.csv",
            ["row_id", "y", "p_global", "cluster", "serving", "p_serving"],
            [
                [
                    int(test.row_ids[i]),
                    int(y_te[i]),
                    _fmt(scores_global[i]),
                    int(test_assign.labels[i]),
                    serving_name[i],
                    _fmt(serving_scores[i]),
                ]
                for i in range(test.n_rows)
            ],
        )

        bundles: dict[str, dict] = {}
        bundles["all"] = _bundle(
            y_te, scores_global, config.bootstrap_b,
            derive_seed(config.seed, "bootstrap", "all"),
        )
        if selected is not None:
            for spec in selected:
                pos = slices[spec.name]
                y_s = y_te[pos]
                if pos.size and np.unique(y_s).size == 2:
                    bundles[spec.name] = _bundle(
                        y_s, scores_global[pos], config.bootstrap_b,
                        derive_seed(config.seed, "bootstrap", spec.name),
                    )
                    run = runs[spec.name]
                    if run.model is not None and not run.failed:
                        bundles[f"{spec.name}_retrained"] = _bundle(
                            y_s, serving_scores[pos], config.bootstrap_b,
                            derive_seed(config.seed, "bootstrap", f"{spec.name}_retrained"),
                        )
        for name, bundle in bundles.items():
            for metric, samples in bundle["_samples"].items():
                _write_rows_csv(
                    outdir / "subgroups" / f"bootstrap_{name}_{metric}.csv",
                    ["replicate", "value"],
                    [[i, _fmt(v)] for i, v in enumerate(samples.values)],
                )
        report["metrics"] = {
            name: {k: v for k, v in bundle.items() if k != "_samples"}
            for name, bundle in bundles.items()
        }

        stage = "compare"
        pairs = [("all", "A"), ("all", "B"), ("A", "A_retrained"), ("B", "B_retrained")]
        comparisons = []
        for left, right in pairs:
            if left not in bundles or right not in bundles:
                continue
            for metric in ("auprc", "log_loss"):
                a = bundles[left]["_samples"][metric].values
                b = bundles[right]["_samples"][metric].values
                res = stats.mann_whitney_u(np.array(a), np.array(b))
                comparisons.append(
                    {
                        "pair": [left, right],
                        "metric": metric,
                        "u_statistic": res.u_statistic,
                        "p_value": res.p_value,
                        "stars": res.stars,
                        "n_a": res.n_a,
                        "n_b": res.n_b,
                        "median_left": bundles[left]["_samples"][metric].median,
                        "median_right": bundles[right]["_samples"][metric].median,
                    }
                )
        report["comparisons"] = comparisons

        stage = "rankings"
        k = min(config.ranking_k, len(feature_names))
        rankings: dict[str, FeatureRanking] = {
            "all": stats.top_features(shap_test.values, feature_names, k)
        }
        if selected is not None:
            for spec in selected:
                pos = slices[spec.name]
                if pos.size:
                    rankings[spec.name] = stats.top_features(
                        shap_test.values[pos], feature_names, k
                    )
                run = runs[spec.name]
                if run.ranking is not None:
                    rankings[f"{spec.name}_retrained"] = run.ranking
        ranking_pairs = []
        for left, right in pairs:
            if left in rankings and right in rankings:
                jaccard, deltas = stats.rank_compare(rankings[left], rankings[right])
                ranking_pairs.append(
                    {"pair": [left, right], "jaccard": jaccard, "rank_deltas": deltas}
                )
        report["rankings"] = {n: _ranking_list(r) for n, r in rankings.items()}
        report["ranking_comparisons"] = ranking_pairs

        stage = "report"
        report["manifest"] = build_manifest(outdir)
        _write_json(outdir / "report.json", report)
        return report
    except Exception as exc:
        report["failure"] = {"stage": stage, "error": str(exc)}
        try:
            report["manifest"] = build_manifest(outdir)
            _write_json(outdir / "report.json", report)
        except OSError:
            pass
        raise StageError(stage, str(exc)) from exc


def load_fitted(outdir: str | Path) -> FittedPipeline:
    """Rebuild the serving bundle from a completed artifact directory."""
    outdir = Path(outdir)
    config = RunConfig.load(outdir / "config.json")
    report = json.loads((outdir / "report.json").read_text(encoding="utf-8"))
    if report.get("failure"):
        raise ValidationError(
            f"artifacts record a failed run at stage {report['failure']['stage']}"
        )
    pre_report = PreprocessReport.from_dict(
        json.loads((outdir / "preprocess" / "report.json").read_text(encoding="utf-8"))
    )
    pre_cfg = replace(config.preprocess, seed=derive_seed(config.seed, "preprocess"))
    model = TreeEnsemble.load(outdir / "model" / "global.json")
    shap_train = ShapMatrix.load(outdir / "shap" / "train.csv", outdir / "shap" / "train.json")
    std_stats = StandardizationStats.from_dict(
        json.loads((outdir / "shap" / "standardization.json").read_text(encoding="utf-8"))
    )
    z_train = standardize_apply(shap_train.values, std_stats)
    _, train_coords = read_embedding_csv(outdir / "embedding" / "train.csv")
    umap_cfg = replace(config.umap, seed=derive_seed(config.seed, "embedding"))
    # graph internals are not needed to place new points
    emb_model = EmbeddingModel(
        embedding=Embedding2D(train_coords, umap_cfg, train_coords.shape[0]),
        train_points=z_train,
        graph_rows=np.zeros(0, dtype=np.int64),
        graph_cols=np.zeros(0, dtype=np.int64),
        graph_weights=np.zeros(0),
        sigmas=np.zeros(train_coords.shape[0]),
        rhos=np.zeros(train_coords.shape[0]),
        sigma_fallbacks=report["embedding"]["sigma_fallbacks"],
        curve_a=report["embedding"]["curve_a"],
        curve_b=report["embedding"]["curve_b"],
    )
    _, train_assign = read_assignment_csv(outdir / "clusters" / "train.csv")

    selection_raw = json.loads(
        (outdir / "subgroups" / "selection.json").read_text(encoding="utf-8")
    )
    selected = None
    runs: dict[str, SubgroupRun] = {}
    if selection_raw is not None:
        selected = tuple(SubgroupSpec.from_dict(s) for s in selection_raw)
        for spec in selected:
            info = json.loads(
                (outdir / "subgroups" / f"run_{spec.name}.json").read_text(encoding="utf-8")
            )
            model_path = outdir / "subgroups" / f"model_{spec.name}.json"
            runs[spec.name] = SubgroupRun(
                spec=spec,
                model=TreeEnsemble.load(model_path) if model_path.exists() else None,
                chosen=None,
                tuning=None,
                train_row_ids=info["train_row_ids"],
                test_row_ids=info["test_row_ids"],
                auprc=info["auprc"],
                log_loss=info["log_loss"],
                failed=info["failed"],
                error=info["error"],
            )

    uncertainty = {}
    metrics = report.get("metrics", {})
    if "all" in metrics:
        uncertainty["global"] = {
            "auprc_iqr": metrics["all"]["bootstrap"]["auprc"]["iqr"],
            "auprc_median": metrics["all"]["bootstrap"]["auprc"]["median"],
            "test_log_loss": metrics["all"]["log_loss"],
        }
    for name in ("A", "B"):
        key = f"{name}_retrained"
        if key in metrics:
            uncertainty[name] = {
                "auprc_iqr": metrics[key]["bootstrap"]["auprc"]["iqr"],
                "auprc_median": metrics[key]["bootstrap"]["auprc"]["median"],
                "test_log_loss": metrics[key]["log_loss"],
            }

    return FittedPipeline(
        preprocess_config=pre_cfg,
        preprocess_report=pre_report,
        model=model,
        feature_names=shap_train.feature_names,
        standardization=std_stats,
        embedding_model=emb_model,
        train_assign=train_assign,
        propagation_k=config.propagation_k,
        exclude_noise_voters=config.exclude_noise_voters,
        selected=selected,
        subgroup_runs=runs,
        uncertainty=uncertainty,
    )


def load_feature_row(path: str | Path, schema: list[tuple[str, str]]) -> FeatureTable:
    """Read a one-or-more-row CSV of raw features (no target column)."""
    feature_schema = [(n, k) for n, k in schema if k != TARGET]
    table = load_csv(path, feature_schema)
    if table.n_rows < 1:
        raise ValidationError("row file contains no data rows")
    return table


def score_row(outdir: str | Path, row_path: str | Path) -> dict:
    """Score one patient row against a completed run's artifacts."""
    outdir = Path(outdir)
    fitted = load_fitted(outdir)
    schema_raw = json.loads(
        (outdir / "preprocess" / "input_schema.json").read_text(encoding="utf-8")
    )
    schema = [(e["name"], e["kind"]) for e in schema_raw]
    rows = load_feature_row(row_path, schema)
    serving, probability, summary = score_new_patient(fitted, rows.select_rows(np.array([0])))
    return {
        "model": serving,
        "probability": probability,
        "uncertainty": summary,
    }


def emit_plot_data(outdir: str | Path) -> list[Path]:
    """Write plot-ready CSV/JSON surfaces derived from run artifacts."""
    outdir = Path(outdir)
    report_path = outdir / "report.json"
    if not report_path.exists():
        raise ValidationError("missing report.json; run the pipeline first")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    plots = outdir / "plots"
    written = []

    rows = []
    for split in ("train", "test"):
        ids, coords = read_embedding_csv(outdir / "embedding" / f"{split}.csv")
        _, assign = read_assignment_csv(outdir / "clusters" / f"{split}.csv")
        for i in range(ids.size):
            rows.append(
                [
                    int(ids[i]),
                    split,
                    _fmt(coords[i, 0]),
                    _fmt(coords[i, 1]),
                    int(assign.labels[i]),
                    _fmt(assign.strengths[i]),
                ]
            )
    path = plots / "embedding_clusters.csv"
    _write_rows_csv(path, ["row_id", "split", "x", "y", "label", "strength"], rows)
    written.append(path)

    for name, entries in report.get("rankings", {}).items():
        path = plots / f"ranking_{name}.csv"
        _write_rows_csv(
            path, ["feature", "mean_abs_shap"], [[f, _fmt(s)] for f, s in entries]
        )
        written.append(path)

    path = plots / "comparisons.json"
    _write_json(path, report.get("comparisons", []))
    written.append(path)
    return written


def verify_artifacts(outdir: str | Path) -> list[str]:
    """Audit a run directory: hashes, recomputable metrics, row counts.

    Returns a list of problems (empty when everything checks out).
    """
    outdir = Path(outdir)
    problems: list[str] = []
    report = json.loads((outdir / "report.json").read_text(encoding="utf-8"))

    manifest = report.get("manifest", {})
    for rel, digest in manifest.items():
        p = outdir / rel
        if not p.exists():
            problems.append(f"missing artifact: {rel}")
        elif _sha256(p) != digest:
            problems.append(f"hash mismatch: {rel}")
    for p in sorted(outdir.rglob("*")):
        rel = p.relative_to(outdir).as_posix()
        if p.is_file() and p.name != "report.json" and not rel.startswith("plots/"):
            if rel not in manifest:
                problems.append(f"unmanifested artifact: {rel}")

    # recompute headline metrics from the persisted per-row scores
    scores_path = outdir / "subgroups" / "scores.csv"
    ids, ys, p_global, clusters, servings, p_serving = [], [], [], [], [], []
    with open(scores_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ids.append(int(row[0]))
            ys.append(int(row[1]))
            p_global.append(float(row[2]))
            clusters.append(int(row[3]))
            servings.append(row[4])
            p_serving.append(float(row[5]))
    y = np.array(ys)
    pg = np.array(p_global)
    ps = np.array(p_serving)
    cluster_arr = np.array(clusters)

    def check_metric(name, expected, actual):
        if expected is None:
            return
        if abs(expected - actual) > 1e-9:
            problems.append(f"{name}: report {expected} != recomputed {actual}")

    metrics = report.get("metrics", {})
    if "all" in metrics:
        check_metric("all.auprc", metrics["all"]["auprc"], stats.auprc(y, pg))
        check_metric("all.log_loss", metrics["all"]["log_loss"], stats.log_loss(y, pg))
        boot = stats.bootstrap_metrics(
            y, pg, metrics["all"]["bootstrap"]["auprc"]["n_replicates"],
            metrics["all"]["bootstrap"]["auprc"]["seed"],
        )
        if boot["auprc"].median != metrics["all"]["bootstrap"]["auprc"]["median"]:
            problems.append("all.bootstrap.auprc.median not reproducible")

    selection = report.get("selection")
    if selection:
        for name, cluster_ids in selection.items():
            pos = np.flatnonzero(np.isin(cluster_arr, cluster_ids))
            if pos.size == 0 or np.unique(y[pos]).size < 2:
                continue
            if name in metrics:
                check_metric(
                    f"{name}.auprc", metrics[name]["auprc"], stats.auprc(y[pos], pg[pos])
                )
            key = f"{name}_retrained"
            if key in metrics:
                check_metric(
                    f"{key}.auprc", metrics[key]["auprc"], stats.auprc(y[pos], ps[pos])
                )

    for split in ("train", "test"):
        emb_ids, _ = read_embedding_csv(outdir / "embedding" / f"{split}.csv")
        cl_ids, _ = read_assignment_csv(outdir / "clusters" / f"{split}.csv")
        if emb_ids.size != cl_ids.size:
            problems.append(f"{split}: embedding/cluster row counts disagree")
        expected = report["preprocess"][f"n_{split}"]
        if emb_ids.size != expected:
            problems.append(f"{split}: embedding rows {emb_ids.size} != {expected}")
    return problems
