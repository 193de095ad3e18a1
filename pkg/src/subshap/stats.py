"""Evaluation statistics: AUPRC, log loss, bootstrap medians, rank tests.

All functions are pure; bootstrap replicates use per-replicate derived
seeds so serial and parallel execution agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import ConfigError, ValidationError
from .seeding import derive_rng

LOG_LOSS_EPS = 1e-15
EXACT_MWU_MAX = 8


@dataclass
class MetricSamples:
    """Bootstrap replicate values of one metric plus order-statistic summaries."""

    name: str
    values: list[float]
    median: float
    iqr: float
    seed: int
    skipped_replicates: int = 0

    @classmethod
    def from_values(
        cls, name: str, values: list[float], seed: int, skipped: int = 0
    ) -> "MetricSamples":
        if not values:
            raise ValidationError(f"no replicate values for metric '{name}'")
        ordered = sorted(values)
        b = len(ordered)
        median = ordered[(b - 1) // 2]
        iqr = ordered[(3 * (b - 1)) // 4] - ordered[(b - 1) // 4]
        return cls(name, list(values), float(median), float(iqr), seed, skipped)


@dataclass
class ComparisonResult:
    u_statistic: float
    p_value: float
    stars: str
    n_a: int
    n_b: int


@dataclass
class FeatureRanking:
    """Features ordered by mean absolute attribution, strongest first."""

    entries: list[tuple[str, float]] = field(default_factory=list)

    @property
    def features(self) -> list[str]:
        return [name for name, _ in self.entries]


def auprc(y: np.ndarray, scores: np.ndarray) -> float:
    """Average precision over descending score thresholds.

    Tied scores are processed as one threshold group, so the value is the
    recall-weighted sum of precisions at each distinct score level.
    """
    y = np.asarray(y, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if y.shape != scores.shape:
        raise ValidationError("labels and scores must have equal length")
    n_pos = float(np.sum(y == 1))
    n_neg = float(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("auprc undefined for single-class labels")
    order = np.argsort(-scores, kind="stable")
    y_sorted = y[order]
    s_sorted = scores[order]
    # last index of each tied-score group
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    group_ends = np.append(boundary, y.size - 1)
    tp = np.cumsum(y_sorted)[group_ends]
    taken = group_ends + 1.0
    precision = tp / taken
    recall = tp / n_pos
    recall_steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(recall_steps * precision))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean negative Bernoulli log likelihood with probabilities clamped
    to [1e-15, 1 - 1e-15]."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if y.shape != p.shape:
        raise ValidationError("labels and probabilities must have equal length")
    p = np.clip(p, LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


_METRIC_FUNCS = {"auprc": auprc, "log_loss": log_loss}


def bootstrap_metrics(
    y: np.ndarray,
    scores: np.ndarray,
    b: int,
    seed: int,
    metrics: tuple[str, ...] = ("auprc", "log_loss"),
) -> dict[str, MetricSamples]:
    """B with-replacement resamples of (y, scores), metrics per replicate.

    Single-class replicates are redrawn up to 100 times from the same
    replicate stream, then skipped and counted. Deterministic given seed.
    """
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=float)
    if b < 1:
        raise ConfigError("bootstrap needs b >= 1")
    if np.unique(y).size < 2:
        raise ValidationError("bootstrap requires both classes present")
    unknown = set(metrics) - set(_METRIC_FUNCS)
    if unknown:
        raise ConfigError(f"unknown metrics: {sorted(unknown)}")
    n = y.size
    values: dict[str, list[float]] = {m: [] for m in metrics}
    skipped = 0
    for r in range(b):
        rng = derive_rng(seed, "replicate", r)
        idx = None
        for _ in range(100):
            candidate = rng.integers(0, n, size=n)
            if np.unique(y[candidate]).size == 2:
                idx = candidate
                break
        if idx is None:
            skipped += 1
            continue
        for m in metrics:
            values[m].append(_METRIC_FUNCS[m](y[idx], scores[idx]))
    if all(len(v) == 0 for v in values.values()):
        raise ValidationError("all bootstrap replicates were degenerate")
    return {
        m: MetricSamples.from_values(m, values[m], seed, skipped) for m in metrics
    }


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=float)
    sorted_vals = pooled[order]
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_u_cdf_counts(n: int, m: int) -> np.ndarray:
    """counts[u] = number of labelings of n+m ranks giving U statistic u.

    Classic recurrence over the null distribution of U; equivalent to
    enumerating all C(n+m, n) assignments (see tests).
    """
    max_u = n * m
    # f[j][u]: ways to choose j of the first (iterating) items with U sum u
    f = np.zeros((n + 1, max_u + 1), dtype=float)
    f[0, 0] = 1.0
    for item in range(1, n + m + 1):
        for j in range(min(item, n), 0, -1):
            # picking item as the j-th (in rank order) sample-a member
            # contributes (item - j) inversions against sample b
            u_add = item - j
            if u_add == 0:
                f[j, :] += f[j - 1, :]
            else:
                f[j, u_add:] += f[j - 1, : max_u + 1 - u_add]
    return f[n, :]


def mann_whitney_u(a: np.ndarray, b: np.ndarray) -> ComparisonResult:
    """Two-sided Mann-Whitney U test.

    Exact null enumeration when min(n, m) <= 8 and no ties are present;
    otherwise normal approximation with tie-corrected variance and a 0.5
    continuity correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("mann_whitney_u needs non-empty samples")
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(np.sum(ranks[:n]))
    u = r_a - n * (n + 1) / 2.0

    has_ties = np.unique(pooled).size < pooled.size
    if min(n, m) <= EXACT_MWU_MAX and not has_ties:
        counts = _exact_u_cdf_counts(n, m)
        total = counts.sum()
        u_int = int(round(u))
        lo = min(u_int, n * m - u_int)
        p = 2.0 * counts[: lo + 1].sum() / total
    else:
        _, tie_counts = np.unique(pooled, return_counts=True)
        nm = n + m
        tie_term = float(np.sum(tie_counts**3 - tie_counts))
        sigma2 = n * m / 12.0 * ((nm + 1) - tie_term / (nm * (nm - 1)))
        if sigma2 <= 0:
            p = 1.0
        else:
            z = max(abs(u - n * m / 2.0) - 0.5, 0.0) / math.sqrt(sigma2)
            p = math.erfc(z / math.sqrt(2.0))
    p = min(max(p, 0.0), 1.0)
    return ComparisonResult(u, p, significance_stars(p), n, m)


def significance_stars(p: float) -> str:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p-value out of range: {p}")
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def chi_squared_tail(stat: float, dof: int) -> float:
    """Upper-tail probability of the chi-squared distribution via the
    regularized incomplete gamma function."""
    if stat < 0 or dof < 1:
        raise ValidationError("chi-squared tail needs stat >= 0 and dof >= 1")
    p = float(gammaincc(dof / 2.0, stat / 2.0))
    return min(max(p, 0.0), 1.0)


def chi_squared_test(feature: np.ndarray, y: np.ndarray) -> tuple[float, float, bool]:
    """Pearson chi-squared test of association against a binary target.

    Returns (statistic, p_value, low_expected_warning). A degenerate table
    (any zero margin, or fewer than 2 levels on either axis) raises
    ValidationError, which callers treat as a constant-feature signal.
    No small-count correction is applied; expected cells < 5 only set the
    warning flag.
    """
    feature = np.asarray(feature)
    y = np.asarray(y)
    levels, level_idx = np.unique(feature, return_inverse=True)
    classes, class_idx = np.unique(y, return_inverse=True)
    if levels.size < 2 or classes.size < 2:
        raise ValidationError("chi-squared needs >= 2 levels in feature and target")
    observed = np.zeros((levels.size, classes.size))
    np.add.at(observed, (level_idx, class_idx), 1.0)
    row = observed.sum(axis=1, keepdims=True)
    col = observed.sum(axis=0, keepdims=True)
    if np.any(row == 0) or np.any(col == 0):
        raise ValidationError("degenerate contingency table")
    expected = row @ col / observed.sum()
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = (levels.size - 1) * (classes.size - 1)
    return stat, chi_squared_tail(stat, dof), bool(np.any(expected < 5))


def top_features(values: np.ndarray, feature_names: list[str], k: int = 5) -> FeatureRanking:
    """Rank features by mean |attribution| over rows, descending.

    Ties resolve to the lower feature index.
    """
    values = np.asarray(values, dtype=float)
    if k > len(feature_names):
        raise ConfigError(f"k={k} exceeds feature count {len(feature_names)}")
    scores = np.mean(np.abs(values), axis=0)
    order = sorted(range(len(feature_names)), key=lambda j: (-scores[j], j))[:k]
    return FeatureRanking([(feature_names[j], float(scores[j])) for j in order])


def rank_compare(
    r1: FeatureRanking, r2: FeatureRanking
) -> tuple[float, dict[str, int]]:
    """Jaccard overlap of the two member sets plus per-shared-feature rank deltas."""
    if len(r1.entries) != len(r2.entries):
        raise ValidationError("rankings must have equal length")
    s1, s2 = set(r1.features), set(r2.features)
    union = s1 | s2
    jaccard = len(s1 & s2) / len(union) if union else 1.0
    pos1 = {f: i for i, f in enumerate(r1.features)}
    pos2 = {f: i for i, f in enumerate(r2.features)}
    deltas = {f: pos2[f] - pos1[f] for f in sorted(s1 & s2)}
    return jaccard, deltas
