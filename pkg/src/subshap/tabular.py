"""Tabular cohort ingestion, preprocessing, and synthetic cohort generation.

A cohort passes through a fixed sequence of steps: coma-score adjustment,
category completion, missingness indicators, stratified split, train-rate
column exclusion, association-based feature selection, per-split
imputation, ordinal encoding, and reindexing. Every statistic that decides
a column's fate is computed on the training split only.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .sampling import stratified_indices
from .seeding import derive_rng
from .stats import chi_squared_test, mann_whitney_u

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
TARGET = "binary-target"

MISSING_TOKENS = ("", "NA")
INDICATOR_SUFFIX = "_missing"

GCS_FLAG = "gcs_unable_apache"
GCS_COMPONENTS = ("gcs_motor", "gcs_verbal", "gcs_eyes")


@dataclass
class FeatureTable:
    """Columnar table with typed columns, a missingness mask, and row ids.

    Continuous columns are float arrays with NaN marking missing cells;
    categorical columns are object arrays of str with None for missing.
    The single target column is an int array and never missing.
    """

    names: list[str]
    kinds: list[str]
    columns: dict[str, np.ndarray]
    row_ids: np.ndarray

    def __post_init__(self):
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        self.validate()

    @property
    def n_rows(self) -> int:
        return int(self.row_ids.size)

    @property
    def has_target(self) -> bool:
        return TARGET in self.kinds

    @property
    def target_name(self) -> str:
        if not self.has_target:
            raise ValidationError("table has no target column")
        return self.names[self.kinds.index(TARGET)]

    def kind_of(self, name: str) -> str:
        return self.kinds[self.names.index(name)]

    def feature_names(self) -> list[str]:
        return [n for n, k in zip(self.names, self.kinds) if k != TARGET]

    def target(self) -> np.ndarray:
        return self.columns[self.target_name]

    def missing_mask(self, name: str) -> np.ndarray:
        col = self.columns[name]
        if self.kind_of(name) == CONTINUOUS:
            return np.isnan(col.astype(float))
        if self.kind_of(name) == CATEGORICAL:
            return np.array([v is None for v in col], dtype=bool)
        return np.zeros(col.size, dtype=bool)

    def copy(self) -> "FeatureTable":
        return FeatureTable(
            list(self.names),
            list(self.kinds),
            {n: self.columns[n].copy() for n in self.names},
            self.row_ids.copy(),
        )

    def select_rows(self, positions: np.ndarray) -> "FeatureTable":
        return FeatureTable(
            list(self.names),
            list(self.kinds),
            {n: self.columns[n][positions] for n in self.names},
            self.row_ids[positions],
        )

    def drop_columns(self, names: list[str]) -> "FeatureTable":
        doomed = set(names)
        keep = [n for n in self.names if n not in doomed]
        return FeatureTable(
            keep,
            [self.kinds[self.names.index(n)] for n in keep],
            {n: self.columns[n] for n in keep},
            self.row_ids,
        )

    def validate(self):
        if len(self.names) != len(set(self.names)):
            raise ValidationError("duplicate column names")
        if self.kinds.count(TARGET) > 1:
            raise ValidationError("at most one binary-target column allowed")
        if np.unique(self.row_ids).size != self.row_ids.size:
            raise ValidationError("row_ids must be unique")
        if self.has_target:
            target = self.columns[self.target_name]
            if not np.all(np.isin(target, (0, 1))):
                raise ValidationError("target values must be 0 or 1")
        for name, kind in zip(self.names, self.kinds):
            col = self.columns[name]
            if col.shape[0] != self.row_ids.size:
                raise ValidationError(f"column '{name}' length mismatch")
            if kind == CONTINUOUS:
                vals = col.astype(float)
                observed = vals[~np.isnan(vals)]
                if observed.size and not np.all(np.isfinite(observed)):
                    raise ValidationError(f"non-finite value in column '{name}'")

    def features_matrix(self) -> tuple[np.ndarray, list[str]]:
        """Dense feature matrix; requires fully encoded, imputed data."""
        feats = self.feature_names()
        for name in feats:
            if self.kind_of(name) != CONTINUOUS:
                raise ValidationError(f"column '{name}' is not numeric yet")
            if self.missing_mask(name).any():
                raise ValidationError(f"column '{name}' still has missing cells")
        X = np.column_stack([self.columns[n].astype(float) for n in feats]) if feats \
            else np.empty((self.n_rows, 0))
        return X, feats

    def to_matrix(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """Dense (X, y, feature_names); requires fully encoded, imputed data."""
        X, feats = self.features_matrix()
        y = self.columns[self.target_name].astype(np.int64)
        return X, y, feats


@dataclass
class PreprocessConfig:
    split_ratio: float = 0.7
    missing_rate_threshold: float = 0.10
    alpha: float = 0.05
    seed: int = 0
    sentinel_category: str = "Unavailable"
    gcs_rule_enabled: bool = True
    complete_category_columns: list[str] = field(
        default_factory=lambda: ["apache_2_bodysystem", "apache_3j_bodysystem"]
    )
    drop_columns: list[str] = field(default_factory=list)
    row_filters: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.missing_rate_threshold < 1:
            raise ConfigError("missing_rate_threshold must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["row_filters"] = [list(f) for f in self.row_filters]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        d = dict(d)
        d["row_filters"] = [tuple(f) for f in d.get("row_filters", [])]
        return cls(**d)


@dataclass
class ExcludedColumn:
    name: str
    reason: str  # config_drop | missing_rate | constant | association
    detail: float | None = None


@dataclass
class PreprocessReport:
    """Machine-readable trace of every column decision and fitted statistic."""

    missing_rates: dict[str, float] = field(default_factory=dict)
    association: dict[str, dict] = field(default_factory=dict)
    excluded: list[ExcludedColumn] = field(default_factory=list)
    retained: list[str] = field(default_factory=list)
    imputation: dict[str, dict[str, object]] = field(default_factory=dict)
    encoder: dict[str, dict[str, int]] = field(default_factory=dict)
    rows_dropped_by_filters: int = 0
    reindex_old_ids: dict[str, list[int]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def validate_coverage(self, input_columns: list[str]):
        seen = [e.name for e in self.excluded] + self.retained
        if sorted(seen) != sorted(input_columns):
            raise ValidationError("report does not cover every input column exactly once")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessReport":
        d = dict(d)
        d["excluded"] = [ExcludedColumn(**e) for e in d.get("excluded", [])]
        return cls(**d)


@dataclass
class SyntheticSpec:
    """Planted-subgroup cohort: per-subgroup feature shifts and outcome models."""

    n_rows: int
    n_features: int
    n_subgroups: int
    coefficients: list[list[float]]
    prevalence: list[float]
    missing_mechanism: str = "none"  # none | random | outcome_linked
    missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.coefficients) != self.n_subgroups:
            raise ConfigError("one coefficient vector per subgroup required")
        if any(len(c) != self.n_features for c in self.coefficients):
            raise ConfigError("coefficient vectors must have n_features entries")
        if len(self.prevalence) != self.n_subgroups:
            raise ConfigError("one prevalence target per subgroup required")
        if any(not 0 < p < 1 for p in self.prevalence):
            raise ConfigError("prevalence targets must lie in (0, 1)")
        for i in range(self.n_subgroups):
            for j in range(i + 1, self.n_subgroups):
                if self.coefficients[i] == self.coefficients[j]:
                    raise ConfigError("coefficient vectors must differ between subgroups")
        if self.missing_mechanism not in ("none", "random", "outcome_linked"):
            raise ConfigError(f"unknown missing mechanism '{self.missing_mechanism}'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# CSV and schema IO


def load_schema(path: str | Path) -> list[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        entries = json.load(fh)
    schema = [(e["name"], e["kind"]) for e in entries]
    kinds = {k for _, k in schema}
    if not kinds <= {CONTINUOUS, CATEGORICAL, TARGET}:
        raise ConfigError(f"unknown column kinds in schema: {kinds}")
    return schema


def load_csv(path: str | Path, schema: list[tuple[str, str]]) -> FeatureTable:
    """Read a UTF-8 comma-separated cohort; '' and 'NA' cells become missing."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    names = [n for n, _ in schema]
    kinds = [k for _, k in schema]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != names:
            raise ValidationError(
                f"header {header} does not match schema columns {names}"
            )
        rows = list(reader)
    columns: dict[str, list] = {n: [] for n in names}
    for r, row in enumerate(rows):
        if len(row) != len(names):
            raise ParseError(f"row {r}: expected {len(names)} cells, got {len(row)}")
        for name, kind, cell in zip(names, kinds, row):
            if cell in MISSING_TOKENS:
                if kind == TARGET:
                    raise ValidationError(f"row {r}: target '{name}' is missing")
                columns[name].append(None)
                continue
            if kind == CATEGORICAL:
                columns[name].append(cell)
            else:
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise ParseError(
                        f"row {r}, column '{name}': cannot parse '{cell}'"
                    ) from exc
                if not math.isfinite(value):
                    raise ParseError(f"row {r}, column '{name}': non-finite value")
                if kind == TARGET:
                    if value not in (0.0, 1.0):
                        raise ValidationError(
                            f"row {r}: target '{name}' must be 0 or 1, got '{cell}'"
                        )
                    columns[name].append(int(value))
                else:
                    columns[name].append(value)
    out: dict[str, np.ndarray] = {}
    for name, kind in zip(names, kinds):
        if kind == CATEGORICAL:
            out[name] = np.array(columns[name], dtype=object)
        elif kind == TARGET:
            out[name] = np.array(columns[name], dtype=np.int64)
        else:
            out[name] = np.array(
                [np.nan if v is None else v for v in columns[name]], dtype=float
            )
    return FeatureTable(names, kinds, out, np.arange(len(rows), dtype=np.int64))


def _format_cell(value, kind: str) -> str:
    if kind == CATEGORICAL:
        return "" if value is None else str(value)
    if kind == TARGET:
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return ""
    return repr(v)


def write_csv(table: FeatureTable, path: str | Path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.names)
    for i in range(table.n_rows):
        writer.writerow(
            [
                _format_cell(table.columns[n][i], k)
                for n, k in zip(table.names, table.kinds)
            ]
        )
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def schema_of(table: FeatureTable) -> list[tuple[str, str]]:
    return list(zip(table.names, table.kinds))


# ---------------------------------------------------------------------------
# Preprocessing steps


def apply_row_filters(
    table: FeatureTable, filters: list[tuple[str, str, float]]
) -> tuple[FeatureTable, int]:
    """Drop rows matching any (column, comparator, constant) rule.

    Missing cells never match a rule. Unknown columns are ignored so one
    config can serve related cohorts.
    """
    ops = {
        "<": np.less,
        "<=": np.less_equal,
        ">": np.greater,
        ">=": np.greater_equal,
        "==": np.equal,
        "!=": np.not_equal,
    }
    drop = np.zeros(table.n_rows, dtype=bool)
    for column, comparator, constant in filters:
        if comparator not in ops:
            raise ConfigError(f"unknown comparator '{comparator}'")
        if column not in table.names:
            continue
        if table.kind_of(column) == CATEGORICAL:
            col = table.columns[column]
            observed = np.array([v is not None for v in col])
            matches = np.array(
                [v is not None and ops[comparator](str(v), str(constant)) for v in col]
            )
            drop |= matches & observed
        else:
            col = table.columns[column].astype(float)
            observed = ~np.isnan(col)
            with np.errstate(invalid="ignore"):
                drop |= ops[comparator](col, float(constant)) & observed
    kept = np.flatnonzero(~drop)
    return table.select_rows(kept), int(drop.sum())


def adjust_gcs(table: FeatureTable) -> FeatureTable:
    """Zero the three coma-score components whenever the unable flag is set.

    A no-op unless all four columns are present.
    """
    needed = (GCS_FLAG, *GCS_COMPONENTS)
    if not all(c in table.names for c in needed):
        return table.copy()
    out = table.copy()
    flag = out.columns[GCS_FLAG].astype(float)
    hit = flag == 1.0
    for comp in GCS_COMPONENTS:
        col = out.columns[comp]
        if out.kind_of(comp) == CATEGORICAL:
            new = col.copy()
            new[hit] = "0"
            out.columns[comp] = new
        else:
            new = col.astype(float).copy()
            new[hit] = 0.0
            out.columns[comp] = new
    return out


def complete_categories(
    table: FeatureTable, column_names: list[str], sentinel: str = "Unavailable"
) -> FeatureTable:
    """Replace missing cells of the named categorical columns with a sentinel."""
    out = table.copy()
    for name in column_names:
        if name not in out.names:
            continue
        if out.kind_of(name) != CATEGORICAL:
            raise ConfigError(f"column '{name}' is not categorical")
        col = out.columns[name].copy()
        col[[v is None for v in col]] = sentinel
        out.columns[name] = col
    return out


def add_missingness_indicators(table: FeatureTable) -> FeatureTable:
    """Append a binary indicator column per non-target feature.

    Indicators are categorical with values "0"/"1" so they flow through the
    chi-squared association test.
    """
    out = table.copy()
    for name in table.feature_names():
        indicator = name + INDICATOR_SUFFIX
        if indicator in out.names:
            raise ValidationError(f"indicator name collision: '{indicator}'")
        mask = table.missing_mask(name)
        out.names.append(indicator)
        out.kinds.append(CATEGORICAL)
        out.columns[indicator] = np.where(mask, "1", "0").astype(object)
    return out


def stratified_split(
    table: FeatureTable, split_ratio: float, seed: int
) -> tuple[FeatureTable, FeatureTable]:
    """Partition rows, giving the train side a largest-remainder share of
    each target class. Deterministic in the seed."""
    if table.n_rows < 4:
        raise ValidationError("need at least 4 rows to split")
    y = table.target()
    rng = derive_rng(seed, "stratified_split")
    train_pos, test_pos = stratified_indices(y, split_ratio, rng)
    return table.select_rows(train_pos), table.select_rows(test_pos)


def exclude_by_missingness(
    train: FeatureTable, test: FeatureTable, threshold: float
) -> tuple[FeatureTable, FeatureTable, list[ExcludedColumn], dict[str, float]]:
    """Remove columns whose train-split missing rate strictly exceeds the
    threshold; the rate never looks at the test split."""
    if train.names != test.names:
        raise ValidationError("train and test column sets differ")
    rates: dict[str, float] = {}
    excluded: list[ExcludedColumn] = []
    for name in train.feature_names():
        r = float(train.missing_mask(name).mean())
        rates[name] = r
        if r > threshold:
            excluded.append(ExcludedColumn(name, "missing_rate", r))
    doomed = [e.name for e in excluded]
    return train.drop_columns(doomed), test.drop_columns(doomed), excluded, rates


def _observed_by_class(table: FeatureTable, name: str):
    mask = ~table.missing_mask(name)
    y = table.target()
    col = table.columns[name]
    return col[mask], y[mask]


def select_by_association(
    train: FeatureTable, test: FeatureTable, alpha: float
) -> tuple[FeatureTable, FeatureTable, list[ExcludedColumn], dict[str, dict]]:
    """Keep features whose train-split association with the target is
    significant: chi-squared for categoricals, Mann-Whitney U for
    continuous features. Untestable columns drop with reason 'constant'.
    """
    y = train.target()
    if np.unique(y).size < 2:
        raise ValidationError("association tests need both classes in train")
    excluded: list[ExcludedColumn] = []
    association: dict[str, dict] = {}
    for name in train.feature_names():
        observed, y_obs = _observed_by_class(train, name)
        kind = train.kind_of(name)
        if observed.size == 0 or np.unique(y_obs).size < 2:
            excluded.append(ExcludedColumn(name, "constant"))
            continue
        if kind == CATEGORICAL:
            if np.unique(observed.astype(str)).size < 2:
                excluded.append(ExcludedColumn(name, "constant"))
                continue
            try:
                _, p, _ = chi_squared_test(observed.astype(str), y_obs)
            except ValidationError:
                excluded.append(ExcludedColumn(name, "constant"))
                continue
            association[name] = {"p": p, "test": "chi2"}
        else:
            vals = observed.astype(float)
            if np.unique(vals).size < 2:
                excluded.append(ExcludedColumn(name, "constant"))
                continue
            a = vals[y_obs == 0]
            b = vals[y_obs == 1]
            p = mann_whitney_u(a, b).p_value
            association[name] = {"p": p, "test": "mwu"}
        if not association.get(name, {}).get("p", 1.0) < alpha:
            excluded.append(ExcludedColumn(name, "association", association[name]["p"]))
    doomed = [e.name for e in excluded]
    return train.drop_columns(doomed), test.drop_columns(doomed), excluded, association


def _lexicographic_mode(values: np.ndarray) -> str:
    cats, counts = np.unique(values.astype(str), return_counts=True)
    best = counts.max()
    return str(min(cats[counts == best]))


def impute(
    train: FeatureTable, test: FeatureTable
) -> tuple[FeatureTable, FeatureTable, dict[str, dict[str, object]]]:
    """Fill remaining missing cells with each split's own median or mode.

    Modes tie-break to the lexicographically smallest category. Fill
    values are recorded for every feature column (serving reuses the train
    ones). Raises if a column is entirely missing within a split.
    """
    out_train, out_test = train.copy(), test.copy()
    values: dict[str, dict[str, object]] = {"train": {}, "test": {}}
    for split_name, tab in (("train", out_train), ("test", out_test)):
        for name in tab.feature_names():
            mask = tab.missing_mask(name)
            if mask.all():
                raise ValidationError(
                    f"column '{name}' entirely missing in {split_name} split"
                )
            if tab.kind_of(name) == CONTINUOUS:
                col = tab.columns[name].astype(float).copy()
                fill = float(np.median(col[~mask]))
                col[mask] = fill
                tab.columns[name] = col
            else:
                col = tab.columns[name].copy()
                fill = _lexicographic_mode(col[~mask])
                col[mask] = fill
                tab.columns[name] = col
            values[split_name][name] = fill
    return out_train, out_test, values


def fit_ordinal_encoder(train: FeatureTable) -> dict[str, dict[str, int]]:
    """Category-to-code maps from train categories only, codes in
    lexicographic order from zero."""
    mapping: dict[str, dict[str, int]] = {}
    for name in train.feature_names():
        if train.kind_of(name) != CATEGORICAL:
            continue
        if train.missing_mask(name).any():
            raise ValidationError(f"encode after imputation: '{name}' has missing cells")
        cats = sorted(set(train.columns[name].astype(str)))
        mapping[name] = {c: i for i, c in enumerate(cats)}
    return mapping


def apply_ordinal_encoder(
    table: FeatureTable, mapping: dict[str, dict[str, int]]
) -> FeatureTable:
    """Encode categoricals to integer codes; unseen categories take the
    reserved code equal to the train category count. Encoded columns become
    continuous-kind integers."""
    out = table.copy()
    for name, codes in mapping.items():
        if name not in out.names:
            continue
        unknown = len(codes)
        col = out.columns[name]
        encoded = np.array(
            [float(codes.get(str(v), unknown)) for v in col], dtype=float
        )
        out.columns[name] = encoded
        out.kinds[out.names.index(name)] = CONTINUOUS
    return out


def ordinal_encode(
    train: FeatureTable, test: FeatureTable
) -> tuple[FeatureTable, FeatureTable, dict[str, dict[str, int]]]:
    mapping = fit_ordinal_encoder(train)
    return apply_ordinal_encoder(train, mapping), apply_ordinal_encoder(test, mapping), mapping


def reindex(table: FeatureTable) -> tuple[FeatureTable, list[int]]:
    """Renumber row ids 0..n-1 preserving order; returns the old ids so a
    new id maps back to position in the original cohort."""
    old = [int(v) for v in table.row_ids]
    out = table.copy()
    out.row_ids = np.arange(table.n_rows, dtype=np.int64)
    return out, old


def preprocess(
    table: FeatureTable, config: PreprocessConfig
) -> tuple[FeatureTable, FeatureTable, PreprocessReport]:
    """Run the full fixed-order preprocessing pipeline on a raw cohort."""
    report = PreprocessReport()
    input_columns = [n for n in table.names if table.kind_of(n) != TARGET]

    work, n_dropped = apply_row_filters(table, config.row_filters)
    report.rows_dropped_by_filters = n_dropped

    config_dropped = [c for c in config.drop_columns if c in work.names]
    for name in config_dropped:
        report.excluded.append(ExcludedColumn(name, "config_drop"))
    work = work.drop_columns(config_dropped)

    if config.gcs_rule_enabled:
        work = adjust_gcs(work)
    present = [c for c in config.complete_category_columns if c in work.names]
    work = complete_categories(work, present, config.sentinel_category)
    before_indicators = set(work.names)
    work = add_missingness_indicators(work)
    indicator_columns = [n for n in work.names if n not in before_indicators]

    train, test = stratified_split(work, config.split_ratio, config.seed)

    train, test, excluded_rate, rates = exclude_by_missingness(
        train, test, config.missing_rate_threshold
    )
    report.missing_rates = rates
    report.excluded.extend(excluded_rate)

    train, test, excluded_assoc, association = select_by_association(
        train, test, config.alpha
    )
    report.association = association
    report.excluded.extend(excluded_assoc)

    train, test, imputation = impute(train, test)
    report.imputation = imputation

    train, test, mapping = ordinal_encode(train, test)
    report.encoder = mapping

    train, old_train = reindex(train)
    test, old_test = reindex(test)
    report.reindex_old_ids = {"train": old_train, "test": old_test}

    report.retained = train.feature_names()
    if not report.retained:
        raise ValidationError("no features survived preprocessing")
    report.validate_coverage(input_columns + indicator_columns)
    if train.names != test.names or train.kinds != test.kinds:
        raise ValidationError("train/test column layout diverged")
    return train, test, report


def preprocess_new_rows(
    table: FeatureTable, config: PreprocessConfig, report: PreprocessReport
) -> FeatureTable:
    """Apply the train-fit transforms to unseen rows for serving.

    Mirrors the in-row steps (coma adjustment, category completion,
    indicators, encoding) and fills missing cells with the *train*
    imputation values. Returns a feature-only table ordered like the
    fitted training matrix.
    """
    work = table
    if config.gcs_rule_enabled:
        work = adjust_gcs(work)
    present = [c for c in config.complete_category_columns if c in work.names]
    work = complete_categories(work, present, config.sentinel_category)
    work = add_missingness_indicators(work)

    missing_feats = [n for n in report.retained if n not in work.names]
    if missing_feats:
        raise ValidationError(f"row lacks fitted features: {missing_feats}")

    for name in report.retained:
        mask = work.missing_mask(name)
        if not mask.any():
            continue
        if name not in report.imputation["train"]:
            raise ValidationError(f"no train imputation value recorded for '{name}'")
        fill = report.imputation["train"][name]
        col = work.columns[name].copy()
        if work.kind_of(name) == CONTINUOUS:
            col = col.astype(float)
            col[mask] = float(fill)
        else:
            col[mask] = str(fill)
        work.columns[name] = col

    work = apply_ordinal_encoder(work, report.encoder)
    return FeatureTable(
        list(report.retained),
        [CONTINUOUS] * len(report.retained),
        {n: work.columns[n] for n in report.retained},
        work.row_ids,
    )


# ---------------------------------------------------------------------------
# Synthetic planted-subgroup cohorts

_MARKER_SHIFT = 3.5


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureTable, np.ndarray, list[str]]:
    """Draw a cohort with planted subgroups.

    Each subgroup has its own feature-mean shift (two marker dimensions per
    subgroup) and its own outcome coefficients; the subgroup intercept is
    bisected so empirical outcome prevalence hits the target. Returns the
    table, per-row planted subgroup ids, and any generation warnings.
    """
    rng = derive_rng(spec.seed, "synthetic")
    n, d, k = spec.n_rows, spec.n_features, spec.n_subgroups
    warnings: list[str] = []

    groups = rng.integers(0, k, size=n)
    X = rng.normal(size=(n, d))
    for g in range(k):
        lo = (2 * g) % d
        members = groups == g
        X[members, lo] += _MARKER_SHIFT
        if d > 1:
            X[members, (lo + 1) % d] += _MARKER_SHIFT

    y = np.zeros(n, dtype=np.int64)
    for g in range(k):
        members = np.flatnonzero(groups == g)
        beta = np.asarray(spec.coefficients[g], dtype=float)
        raw = X[members] @ beta
        target = spec.prevalence[g]
        lo_b, hi_b = -60.0, 60.0
        for _ in range(200):
            mid = 0.5 * (lo_b + hi_b)
            mean_p = float(np.mean(1.0 / (1.0 + np.exp(-(raw + mid)))))
            if mean_p < target:
                lo_b = mid
            else:
                hi_b = mid
        intercept = 0.5 * (lo_b + hi_b)
        p = 1.0 / (1.0 + np.exp(-(raw + intercept)))
        achieved = float(p.mean())
        if abs(achieved - target) > 0.02:
            warnings.append(
                f"subgroup {g}: prevalence target {target} unreachable "
                f"(achieved {achieved:.3f})"
            )
        y[members] = (rng.random(members.size) < p).astype(np.int64)

    names = [f"f{j:02d}" for j in range(d)] + ["outcome"]
    kinds = [CONTINUOUS] * d + [TARGET]
    columns = {f"f{j:02d}": X[:, j].copy() for j in range(d)}
    columns["outcome"] = y

    if spec.missing_mechanism != "none" and spec.missing_rate > 0:
        for j in range(d):
            if spec.missing_mechanism == "random":
                rate = np.full(n, spec.missing_rate)
            else:
                rate = np.where(y == 1, 1.5 * spec.missing_rate, 0.5 * spec.missing_rate)
            holes = rng.random(n) < rate
            col = columns[f"f{j:02d}"]
            col[holes] = np.nan
            columns[f"f{j:02d}"] = col

    table = FeatureTable(names, kinds, columns, np.arange(n, dtype=np.int64))
    return table, groups, warnings
