"""Gradient-boosted decision trees for binary outcomes.

Second-order boosting with logistic loss and exact greedy splits:
candidate thresholds are midpoints between consecutive distinct sorted
feature values, split gain is the usual regularized reduction
0.5 * (GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)), and leaf values are
-G/(H+l2). Node cover is the summed hessian, which downstream attribution
uses as a conditional-expectation weight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .sampling import stratified_indices
from .seeding import derive_rng
from .stats import auprc, log_loss

PREVALENCE_CLAMP = 1e-6


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (value); cover is
    the hessian mass that reached the node during training."""

    cover: float
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "cover": self.cover}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "cover": self.cover,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "value" in d:
            return cls(cover=d["cover"], value=d["value"])
        return cls(
            cover=d["cover"],
            feature=d["feature"],
            threshold=d["threshold"],
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


@dataclass
class Hyperparams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_lambda: float = 1.0
    min_split_gain: float = 0.0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


def default_grid() -> list[Hyperparams]:
    """Small overridable search grid; desk-scale by design."""
    grid = []
    for depth in (3, 4, 6):
        for lr in (0.05, 0.1, 0.3):
            for n_trees in (100, 300):
                grid.append(
                    Hyperparams(n_trees=n_trees, max_depth=depth, learning_rate=lr)
                )
    return grid


@dataclass
class FlatTree:
    """Array view of one tree for fast traversal and attribution kernels."""

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray


def flatten_tree(root: TreeNode) -> FlatTree:
    nodes: list[TreeNode] = []

    def collect(node: TreeNode) -> int:
        idx = len(nodes)
        nodes.append(node)
        if not node.is_leaf:
            left = collect(node.left)
            right = collect(node.right)
            links[idx] = (left, right)
        return idx

    links: dict[int, tuple[int, int]] = {}
    collect(root)
    n = len(nodes)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.zeros(n, dtype=float)
    value = np.zeros(n, dtype=float)
    cover = np.zeros(n, dtype=float)
    for i, node in enumerate(nodes):
        cover[i] = node.cover
        if node.is_leaf:
            value[i] = node.value
        else:
            left[i], right[i] = links[i]
            feature[i] = node.feature
            threshold[i] = node.threshold
    return FlatTree(left, right, feature, threshold, value, cover)


@dataclass
class TreeEnsemble:
    trees: list[TreeNode]
    learning_rate: float
    base_score: float
    n_features: int
    n_training_rows: int = 0

    def __post_init__(self):
        self._flat_cache: list[FlatTree] | None = None

    def flat_trees(self) -> list[FlatTree]:
        if self._flat_cache is None or len(self._flat_cache) != len(self.trees):
            self._flat_cache = [flatten_tree(t) for t in self.trees]
        return self._flat_cache

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "n_training_rows": self.n_training_rows,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            learning_rate=d["learning_rate"],
            base_score=d["base_score"],
            n_features=d["n_features"],
            n_training_rows=d.get("n_training_rows", 0),
        )

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _tree_predict(flat: FlatTree, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if rows.size == 0:
            continue
        if flat.children_left[node] < 0:
            out[rows] = flat.value[node]
            continue
        goes_left = X[rows, flat.feature[node]] < flat.threshold[node]
        stack.append((int(flat.children_left[node]), rows[goes_left]))
        stack.append((int(flat.children_right[node]), rows[~goes_left]))
    return out


def predict_margin(model: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} feature columns, got shape {X.shape}"
        )
    margin = np.full(X.shape[0], model.base_score)
    for flat in model.flat_trees():
        margin += model.learning_rate * _tree_predict(flat, X)
    return margin


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def predict_proba(model: TreeEnsemble, X: np.ndarray) -> np.ndarray:
    return _sigmoid(predict_margin(model, X))


def _build_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    hp: Hyperparams,
    sorted_idx: np.ndarray,
) -> TreeNode:
    lam = hp.l2_lambda
    n, d = X.shape

    def grow(rows_mask: np.ndarray, depth: int) -> TreeNode:
        g_sum = float(g[rows_mask].sum())
        h_sum = float(h[rows_mask].sum())
        node_cover = h_sum
        if depth >= hp.max_depth:
            return TreeNode(cover=node_cover, value=-g_sum / (h_sum + lam))
        best = None  # (gain, feature, threshold)
        for j in range(d):
            order = sorted_idx[j][rows_mask[sorted_idx[j]]]
            vals = X[order, j]
            if vals.size < 2 or vals[0] == vals[-1]:
                continue
            g_cum = np.cumsum(g[order])[:-1]
            h_cum = np.cumsum(h[order])[:-1]
            boundaries = np.flatnonzero(vals[:-1] != vals[1:])
            if boundaries.size == 0:
                continue
            gl, hl = g_cum[boundaries], h_cum[boundaries]
            gr, hr = g_sum - gl, h_sum - hl
            valid = (hl >= hp.min_child_weight) & (hr >= hp.min_child_weight)
            if not valid.any():
                continue
            gains = 0.5 * (
                gl**2 / (hl + lam)
                + gr**2 / (hr + lam)
                - g_sum**2 / (h_sum + lam)
            )
            gains[~valid] = -np.inf
            k = int(np.argmax(gains))  # first (lowest threshold) wins ties
            if gains[k] > hp.min_split_gain and (best is None or gains[k] > best[0]):
                thr = 0.5 * (vals[boundaries[k]] + vals[boundaries[k] + 1])
                best = (float(gains[k]), j, thr)
        if best is None:
            return TreeNode(cover=node_cover, value=-g_sum / (h_sum + lam))
        _, feature, threshold = best
        left_mask = rows_mask & (X[:, feature] < threshold)
        right_mask = rows_mask & ~(X[:, feature] < threshold)
        return TreeNode(
            cover=node_cover,
            feature=feature,
            threshold=threshold,
            left=grow(left_mask, depth + 1),
            right=grow(right_mask, depth + 1),
        )

    return grow(np.ones(n, dtype=bool), 0)


def fit(X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int = 0) -> TreeEnsemble:
    """Boost hp.n_trees rounds of second-order logistic trees.

    Deterministic for fixed inputs; the seed is accepted for interface
    symmetry (no subsampling is performed).
    """
    del seed
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValidationError("X and y shapes disagree")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite and fully observed")
    if np.unique(y).size < 2:
        raise ValidationError("training labels contain a single class")

    prevalence = float(np.clip(y.mean(), PREVALENCE_CLAMP, 1 - PREVALENCE_CLAMP))
    base_score = float(np.log(prevalence / (1.0 - prevalence)))
    margin = np.full(y.size, base_score)
    sorted_idx = np.argsort(X, axis=0, kind="stable").T.copy()

    trees: list[TreeNode] = []
    for _ in range(hp.n_trees):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        root = _build_tree(X, g, h, hp, sorted_idx)
        trees.append(root)
        margin += hp.learning_rate * _tree_predict(flatten_tree(root), X)
    return TreeEnsemble(
        trees=trees,
        learning_rate=hp.learning_rate,
        base_score=base_score,
        n_features=X.shape[1],
        n_training_rows=int(y.size),
    )


@dataclass
class TuningRecord:
    entries: list[dict] = field(default_factory=list)
    chosen_index: int = -1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TuningRecord":
        return cls(**d)


def tune_and_fit(
    X: np.ndarray,
    y: np.ndarray,
    grid: list[Hyperparams],
    seed: int = 0,
) -> tuple[TreeEnsemble, Hyperparams, TuningRecord]:
    """Grid search on an inner stratified 80/20 split, then refit the winner
    on all provided rows.

    Grid points are scored by validation AUPRC; ties fall back to lower
    validation log loss, then earlier grid order. The inner partition is
    redrawn (up to 10 attempts) until both parts contain both classes.
    """
    if not grid:
        raise ConfigError("hyperparameter grid is empty")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)

    fit_idx = val_idx = None
    for attempt in range(10):
        rng = derive_rng(seed, "tune_split", attempt)
        try:
            a, b = stratified_indices(y, 0.8, rng)
        except ValidationError:
            raise ValidationError("tuning requires both classes present") from None
        if np.unique(y[a]).size == 2 and np.unique(y[b]).size == 2:
            fit_idx, val_idx = a, b
            break
    if fit_idx is None:
        raise ValidationError("could not form two-class tuning partitions")

    record = TuningRecord()
    best = None  # (-auprc, logloss, order)
    for i, hp in enumerate(grid):
        model = fit(X[fit_idx], y[fit_idx], hp, seed)
        p = predict_proba(model, X[val_idx])
        val_auprc = auprc(y[val_idx], p)
        val_ll = log_loss(y[val_idx], p)
        record.entries.append(
            {"hyperparams": hp.to_dict(), "val_auprc": val_auprc, "val_log_loss": val_ll}
        )
        key = (-val_auprc, val_ll, i)
        if best is None or key < best:
            best = key
            record.chosen_index = i
    chosen = grid[record.chosen_index]
    final = fit(X, y, chosen, seed)
    return final, chosen, record
