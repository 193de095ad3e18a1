"""Exact path-dependent Shapley attribution for tree ensembles.

Per tree, the polynomial-time path algorithm tracks, for every feature on
the current root-to-node path, the fraction of cover-weighted paths that
flow when the feature is excluded (zero fraction) or included (one
fraction), extending and unwinding a weight path as it descends. Cover
weights (summed hessians recorded at training time) serve as the
conditional expectation measure, so no background dataset is needed.
Attributions are in margin (log-odds) units.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ValidationError
from .gbdt import TreeEnsemble

ZERO_VARIANCE_EPS = 0.0


@dataclass
class ShapMatrix:
    values: np.ndarray  # n_rows x n_features, margin units
    base_value: float
    feature_names: list[str]
    row_ids: np.ndarray

    def save(self, csv_path: str | Path, sidecar_path: str | Path):
        csv_path, sidecar_path = Path(csv_path), Path(sidecar_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        sidecar_path.parent.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row_id", *self.feature_names])
        for rid, row in zip(self.row_ids, self.values):
            writer.writerow([int(rid), *[repr(float(v)) for v in row]])
        csv_path.write_text(buf.getvalue(), encoding="utf-8")
        sidecar = {"base_value": self.base_value, "feature_names": self.feature_names}
        sidecar_path.write_text(json.dumps(sidecar), encoding="utf-8")

    @classmethod
    def load(cls, csv_path: str | Path, sidecar_path: str | Path) -> "ShapMatrix":
        sidecar = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
        rows = []
        ids = []
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                ids.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
        return cls(
            np.array(rows, dtype=float),
            sidecar["base_value"],
            sidecar["feature_names"],
            np.array(ids, dtype=np.int64),
        )


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray  # population (1/n) standard deviation
    zero_variance: np.ndarray  # bool flags

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "zero_variance": [bool(v) for v in self.zero_variance],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(
            np.array(d["mean"], dtype=float),
            np.array(d["std"], dtype=float),
            np.array(d["zero_variance"], dtype=bool),
        )


@njit(cache=True)
def _extend(feat, zero, one, weight, depth, pz, po, pi):
    feat[depth] = pi
    zero[depth] = pz
    one[depth] = po
    weight[depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        weight[i + 1] += po * weight[i] * (i + 1.0) / (depth + 1.0)
        weight[i] = pz * weight[i] * (depth - i) / (depth + 1.0)


@njit(cache=True)
def _unwind(feat, zero, one, weight, depth, index):
    of = one[index]
    zf = zero[index]
    nxt = weight[depth]
    for i in range(depth - 1, -1, -1):
        if of != 0.0:
            tmp = weight[i]
            weight[i] = nxt * (depth + 1.0) / ((i + 1.0) * of)
            nxt = tmp - weight[i] * zf * (depth - i) / (depth + 1.0)
        else:
            weight[i] = weight[i] * (depth + 1.0) / (zf * (depth - i))
    for i in range(index, depth):
        feat[i] = feat[i + 1]
        zero[i] = zero[i + 1]
        one[i] = one[i + 1]


@njit(cache=True)
def _unwound_sum(zero, one, weight, depth, index):
    of = one[index]
    zf = zero[index]
    nxt = weight[depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if of != 0.0:
            tmp = nxt * (depth + 1.0) / ((i + 1.0) * of)
            total += tmp
            nxt = weight[i] - tmp * zf * (depth - i) / (depth + 1.0)
        else:
            total += weight[i] / zf * (depth + 1.0) / (depth - i)
    return total


@njit(cache=True)
def _tree_shap_one(
    left, right, feature, threshold, value, cover, x, phi, scale,
    feat_buf, zero_buf, one_buf, weight_buf,
    node_stack, depth_stack, offset_stack, pz_stack, po_stack, pi_stack,
):
    top = 0
    node_stack[0] = 0
    depth_stack[0] = 0
    offset_stack[0] = 0
    pz_stack[0] = 1.0
    po_stack[0] = 1.0
    pi_stack[0] = -1
    while top >= 0:
        j = node_stack[top]
        depth = depth_stack[top]
        parent_off = offset_stack[top]
        pz = pz_stack[top]
        po = po_stack[top]
        pi = pi_stack[top]
        top -= 1

        off = parent_off + depth  # this frame's path segment
        for i in range(depth):
            feat_buf[off + i] = feat_buf[parent_off + i]
            zero_buf[off + i] = zero_buf[parent_off + i]
            one_buf[off + i] = one_buf[parent_off + i]
            weight_buf[off + i] = weight_buf[parent_off + i]
        feat = feat_buf[off:]
        zero = zero_buf[off:]
        one = one_buf[off:]
        weight = weight_buf[off:]
        _extend(feat, zero, one, weight, depth, pz, po, pi)
        depth += 1

        if left[j] < 0:
            leaf = value[j]
            for i in range(1, depth):
                w = _unwound_sum(zero, one, weight, depth - 1, i)
                phi[feat[i]] += w * (one[i] - zero[i]) * leaf * scale
        else:
            f = feature[j]
            if x[f] < threshold[j]:
                hot, cold = left[j], right[j]
            else:
                hot, cold = right[j], left[j]
            iz = 1.0
            io = 1.0
            path_index = -1
            for i in range(depth):
                if feat[i] == f:
                    path_index = i
                    break
            if path_index >= 0:
                iz = zero[path_index]
                io = one[path_index]
                _unwind(feat, zero, one, weight, depth - 1, path_index)
                depth -= 1

            hot_frac = cover[hot] / cover[j]
            cold_frac = cover[cold] / cover[j]

            top += 1
            node_stack[top] = cold
            depth_stack[top] = depth
            offset_stack[top] = off
            pz_stack[top] = cold_frac * iz
            po_stack[top] = 0.0
            pi_stack[top] = f

            top += 1
            node_stack[top] = hot
            depth_stack[top] = depth
            offset_stack[top] = off
            pz_stack[top] = hot_frac * iz
            po_stack[top] = io
            pi_stack[top] = f


@njit(cache=True)
def _forest_shap(
    lefts, rights, features, thresholds, values, covers, tree_offsets,
    X, learning_rate, max_nodes,
):
    n, d = X.shape
    phi = np.zeros((n, d))
    buf_len = (max_nodes + 2) * (max_nodes + 3)
    feat_buf = np.empty(buf_len, dtype=np.int64)
    zero_buf = np.empty(buf_len)
    one_buf = np.empty(buf_len)
    weight_buf = np.empty(buf_len)
    stack_len = 2 * max_nodes + 8
    node_stack = np.empty(stack_len, dtype=np.int64)
    depth_stack = np.empty(stack_len, dtype=np.int64)
    offset_stack = np.empty(stack_len, dtype=np.int64)
    pz_stack = np.empty(stack_len)
    po_stack = np.empty(stack_len)
    pi_stack = np.empty(stack_len, dtype=np.int64)
    for r in range(n):
        x = X[r]
        for t in range(tree_offsets.size - 1):
            s = tree_offsets[t]
            e = tree_offsets[t + 1]
            _tree_shap_one(
                lefts[s:e], rights[s:e], features[s:e], thresholds[s:e],
                values[s:e], covers[s:e], x, phi[r], learning_rate,
                feat_buf, zero_buf, one_buf, weight_buf,
                node_stack, depth_stack, offset_stack, pz_stack, po_stack, pi_stack,
            )
    return phi


def _pack_forest(model: TreeEnsemble):
    flats = model.flat_trees()
    offsets = np.zeros(len(flats) + 1, dtype=np.int64)
    for i, f in enumerate(flats):
        offsets[i + 1] = offsets[i] + f.children_left.size
    lefts = np.concatenate([f.children_left for f in flats]) if flats else np.zeros(0, np.int64)
    rights = np.concatenate([f.children_right for f in flats]) if flats else np.zeros(0, np.int64)
    features = np.concatenate([f.feature for f in flats]) if flats else np.zeros(0, np.int64)
    thresholds = np.concatenate([f.threshold for f in flats]) if flats else np.zeros(0)
    values = np.concatenate([f.value for f in flats]) if flats else np.zeros(0)
    covers = np.concatenate([f.cover for f in flats]) if flats else np.zeros(0)
    return lefts, rights, features, thresholds, values, covers, offsets


def expected_margin(model: TreeEnsemble) -> float:
    """Cover-weighted mean margin: the attribution base value."""
    total = model.base_score
    for flat in model.flat_trees():
        leaves = flat.children_left < 0
        root_cover = flat.cover[0]
        if root_cover <= 0:
            raise ValidationError("tree has non-positive root cover")
        total += model.learning_rate * float(
            np.sum(flat.value[leaves] * flat.cover[leaves]) / root_cover
        )
    return float(total)


def tree_shap(
    model: TreeEnsemble,
    X: np.ndarray,
    feature_names: list[str] | None = None,
    row_ids: np.ndarray | None = None,
) -> ShapMatrix:
    """Per-row, per-feature margin attributions for a trained ensemble.

    base_value + sum(values[i]) equals the predicted margin of row i.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} feature columns, got shape {X.shape}"
        )
    for flat in model.flat_trees():
        internal = flat.children_left >= 0
        if np.any(flat.cover[internal] <= 0):
            raise ValidationError("zero-cover internal node; model is inconsistent")
    packed = _pack_forest(model)
    max_nodes = max((f.children_left.size for f in model.flat_trees()), default=1)
    phi = _forest_shap(*packed, X, model.learning_rate, max_nodes)
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(model.n_features)]
    if row_ids is None:
        row_ids = np.arange(X.shape[0], dtype=np.int64)
    return ShapMatrix(phi, expected_margin(model), list(feature_names), np.asarray(row_ids))


def standardize_fit(train_values: np.ndarray) -> StandardizationStats:
    """Per-feature mean and population std over training attribution rows."""
    values = np.asarray(train_values, dtype=float)
    if values.shape[0] < 2:
        raise ValidationError("standardization needs at least 2 rows")
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population denominator n
    return StandardizationStats(mean, std, std <= ZERO_VARIANCE_EPS)


def standardize_apply(values: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    """(value - mean) / std per feature; zero-variance features map to 0."""
    values = np.asarray(values, dtype=float)
    if values.shape[1] != stats.mean.size:
        raise ValidationError(
            f"feature-set mismatch: {values.shape[1]} vs {stats.mean.size}"
        )
    safe = np.where(stats.zero_variance, 1.0, stats.std)
    out = (values - stats.mean) / safe
    out[:, stats.zero_variance] = 0.0
    return out
