"""2D neighbor-graph embedding of standardized attribution matrices.

Fit builds an exact k-nearest-neighbor graph, converts distances to fuzzy
membership weights (per-point offset rho = nearest-neighbor distance,
scale sigma solved by bisection so the membership sum hits log2(k)),
symmetrizes with the probabilistic union a + b - a*b, and optimizes a
seeded random layout with per-edge attractive updates and negative-sampled
repulsive updates against the curve 1 / (1 + a * d^(2b)).

Internally rows are processed in a canonical lexicographic order so the
result is equivariant to input row permutation; all randomness flows from
the config seed. Test rows are placed by distance-weighted averaging of
their nearest training rows' coordinates, with no further optimization.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from .errors import ConfigError, ValidationError
from .seeding import derive_rng

SIGMA_TOLERANCE = 1e-3
MAX_SIGMA_ITER = 256
GRAD_CLIP = 4.0
REPULSION_GAMMA = 1.0
INITIAL_ALPHA = 1.0


@dataclass
class UmapConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 200
    negative_sample_rate: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ConfigError("n_neighbors must be >= 2")
        if self.min_dist <= 0:
            raise ConfigError("min_dist must be > 0")
        if self.n_epochs < 0:
            raise ConfigError("n_epochs must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UmapConfig":
        return cls(**d)


@dataclass
class Embedding2D:
    coords: np.ndarray
    config: UmapConfig
    fitted_on: int


@dataclass
class EmbeddingModel:
    """Fitted embedding plus everything needed to place new points."""

    embedding: Embedding2D
    train_points: np.ndarray
    graph_rows: np.ndarray
    graph_cols: np.ndarray
    graph_weights: np.ndarray
    sigmas: np.ndarray
    rhos: np.ndarray
    sigma_fallbacks: int
    curve_a: float
    curve_b: float


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.sqrt(sq)


def knn_graph(points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors per point, self excluded.

    Returns (indices, distances), each n x k, neighbors sorted by distance
    with ties broken by lower row id.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k >= n:
        raise ConfigError(f"k={k} must be smaller than n={n}")
    dist = pairwise_distances(points, points)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(dist, order, axis=1)


def fit_curve_params(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Least-squares (a, b) so 1/(1+a d^(2b)) tracks the offset exponential."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv)
    return float(a), float(b)


def _smooth_weights(knn_dists: np.ndarray, k: int):
    """Per-point (rho, sigma, fallback_count) and membership weights."""
    n = knn_dists.shape[0]
    rhos = knn_dists[:, 0].copy()
    sigmas = np.empty(n)
    target = np.log2(k)
    fallbacks = 0
    for i in range(n):
        d = knn_dists[i] - rhos[i]
        np.maximum(d, 0.0, out=d)

        def psum(sigma):
            return float(np.sum(np.exp(-d / sigma)))

        lo, hi, mid = 0.0, np.inf, 1.0
        converged = False
        for _ in range(MAX_SIGMA_ITER):
            s = psum(mid)
            if abs(s - target) < SIGMA_TOLERANCE:
                converged = True
                break
            if s > target:
                hi = mid
                mid = 0.5 * (lo + hi)
            else:
                lo = mid
                mid = mid * 2.0 if np.isinf(hi) else 0.5 * (lo + hi)
        if converged:
            sigmas[i] = mid
        else:
            sigmas[i] = float(knn_dists[i].mean())
            fallbacks += 1
    weights = np.empty_like(knn_dists)
    for i in range(n):
        gap = knn_dists[i] - rhos[i]
        if sigmas[i] > 0:
            weights[i] = np.where(gap <= 0, 1.0, np.exp(-gap / sigmas[i]))
        else:
            weights[i] = np.where(gap <= 0, 1.0, 0.0)
    return rhos, sigmas, fallbacks, weights


def _symmetrize(knn_idx: np.ndarray, weights: np.ndarray, n: int):
    """Fuzzy union a + b - a*b over the directed neighbor entries."""
    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j_pos in range(knn_idx.shape[1]):
            directed[(i, int(knn_idx[i, j_pos]))] = float(weights[i, j_pos])
    merged: dict[tuple[int, int], float] = {}
    for (i, j), w in directed.items():
        if (i, j) in merged:
            continue
        w_t = directed.get((j, i), 0.0)
        value = w + w_t - w * w_t
        merged[(i, j)] = value
        merged[(j, i)] = value
    keys = sorted(merged)
    rows = np.array([k[0] for k in keys], dtype=np.int64)
    cols = np.array([k[1] for k in keys], dtype=np.int64)
    vals = np.array([merged[k] for k in keys])
    return rows, cols, vals


@njit(cache=True)
def _tau_rand(state):
    state[0] = (((state[0] & 4294967294) << 12) & 0xFFFFFFFF) ^ (
        (((state[0] << 13) & 0xFFFFFFFF) ^ state[0]) >> 19
    )
    state[1] = (((state[1] & 4294967288) << 4) & 0xFFFFFFFF) ^ (
        (((state[1] << 2) & 0xFFFFFFFF) ^ state[1]) >> 25
    )
    state[2] = (((state[2] & 4294967280) << 17) & 0xFFFFFFFF) ^ (
        (((state[2] << 3) & 0xFFFFFFFF) ^ state[2]) >> 11
    )
    return state[0] ^ state[1] ^ state[2]


@njit(cache=True, inline="always")
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@njit(cache=True)
def _optimize_layout(
    emb, head, tail, n_epochs, epochs_per_sample, a, b, neg_rate, rng_state
):
    n_vertices = emb.shape[0]
    n_edges = head.size
    eps_neg = epochs_per_sample / neg_rate
    next_sample = epochs_per_sample.copy()
    next_neg = eps_neg.copy()
    for epoch in range(n_epochs):
        alpha = INITIAL_ALPHA * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if next_sample[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            dx = emb[i, 0] - emb[j, 0]
            dy = emb[i, 1] - emb[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2**b + 1.0)
                gx = _clip(coeff * dx)
                gy = _clip(coeff * dy)
                emb[i, 0] += alpha * gx
                emb[i, 1] += alpha * gy
                emb[j, 0] -= alpha * gx
                emb[j, 1] -= alpha * gy
            next_sample[e] += epochs_per_sample[e]

            n_neg = int((epoch - next_neg[e]) / eps_neg[e])
            for _ in range(n_neg):
                k = int(_tau_rand(rng_state) % n_vertices)
                if k < 0:
                    k += n_vertices
                if k == i:
                    continue
                dx = emb[i, 0] - emb[k, 0]
                dy = emb[i, 1] - emb[k, 1]
                d2 = dx * dx + dy * dy
                if d2 > 0.0:
                    coeff = (2.0 * REPULSION_GAMMA * b) / (
                        (0.001 + d2) * (a * d2**b + 1.0)
                    )
                    emb[i, 0] += alpha * _clip(coeff * dx)
                    emb[i, 1] += alpha * _clip(coeff * dy)
                else:
                    emb[i, 0] += alpha * GRAD_CLIP
                    emb[i, 1] += alpha * GRAD_CLIP
            next_neg[e] += n_neg * eps_neg[e]
    return emb


def fit_embedding(train_points: np.ndarray, config: UmapConfig) -> EmbeddingModel:
    """Fit the 2D embedding on training rows only."""
    points = np.asarray(train_points, dtype=float)
    n = points.shape[0]
    if n < config.n_neighbors + 1:
        raise ConfigError(
            f"need at least n_neighbors+1={config.n_neighbors + 1} rows, got {n}"
        )

    # canonical processing order makes the fit row-permutation equivariant
    canon = np.lexsort(points.T[::-1])
    inverse = np.empty(n, dtype=np.int64)
    inverse[canon] = np.arange(n)
    pts = points[canon]

    knn_idx, knn_dists = knn_graph(pts, config.n_neighbors)
    rhos, sigmas, fallbacks, weights = _smooth_weights(knn_dists, config.n_neighbors)
    rows, cols, vals = _symmetrize(knn_idx, weights, n)

    curve_a, curve_b = fit_curve_params(config.min_dist)

    rng = derive_rng(config.seed, "layout_init")
    emb = rng.uniform(-10.0, 10.0, size=(n, 2))

    if config.n_epochs > 0 and vals.size:
        keep = vals >= vals.max() / config.n_epochs
        rows_k, cols_k, vals_k = rows[keep], cols[keep], vals[keep]
        epochs_per_sample = vals_k.max() / vals_k
        state_rng = derive_rng(config.seed, "negative_sampling")
        rng_state = state_rng.integers(1 << 16, 1 << 31, size=3).astype(np.int64)
        emb = _optimize_layout(
            emb,
            rows_k,
            cols_k,
            config.n_epochs,
            epochs_per_sample,
            curve_a,
            curve_b,
            float(config.negative_sample_rate),
            rng_state,
        )

    coords = emb[inverse]
    return EmbeddingModel(
        embedding=Embedding2D(coords, config, n),
        train_points=points.copy(),
        graph_rows=canon[rows],
        graph_cols=canon[cols],
        graph_weights=vals,
        sigmas=sigmas[inverse],
        rhos=rhos[inverse],
        sigma_fallbacks=fallbacks,
        curve_a=curve_a,
        curve_b=curve_b,
    )


def transform_embedding(
    model: EmbeddingModel, test_points: np.ndarray, k: int | None = None
) -> Embedding2D:
    """Place test rows at the inverse-distance-weighted mean of their k
    nearest training rows' coordinates; no optimization."""
    test_points = np.asarray(test_points, dtype=float)
    if test_points.shape[1] != model.train_points.shape[1]:
        raise ValidationError(
            f"width mismatch: {test_points.shape[1]} vs {model.train_points.shape[1]}"
        )
    if k is None:
        k = model.embedding.config.n_neighbors
    n_train = model.train_points.shape[0]
    if k > n_train:
        raise ConfigError(f"k={k} exceeds train size {n_train}")
    dist = pairwise_distances(test_points, model.train_points)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    d = np.take_along_axis(dist, order, axis=1)
    w = 1.0 / (d + 1e-12)
    w /= w.sum(axis=1, keepdims=True)
    coords = np.einsum("ij,ijk->ik", w, model.embedding.coords[order])
    return Embedding2D(coords, model.embedding.config, n_train)
