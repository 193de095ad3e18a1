import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from subshap.embedding import (
    EmbeddingModel,
    UmapConfig,
    fit_curve_params,
    fit_embedding,
    knn_graph,
    transform_embedding,
)
from subshap.errors import ConfigError, ValidationError


def two_blobs(n_per=200, separation=10.0, seed=0, d=5):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_per, d))
    b = rng.normal(size=(n_per, d))
    b[:, 0] += separation
    labels = np.array([0] * n_per + [1] * n_per)
    return np.vstack([a, b]), labels


class TestKnnGraph:
    def test_complete_lists_when_k_is_n_minus_one(self):
        rng = np.random.default_rng(1)
        points = rng.normal(size=(8, 3))
        idx, dists = knn_graph(points, 7)
        for i in range(8):
            assert sorted(idx[i].tolist()) == sorted(set(range(8)) - {i})
            assert np.all(np.diff(dists[i]) >= 0)

    def test_duplicate_point_is_nearest_at_zero(self):
        points = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [9.0, 9.0]])
        idx, dists = knn_graph(points, 2)
        assert idx[0, 0] == 1 and dists[0, 0] == 0.0
        assert idx[1, 0] == 0 and dists[1, 0] == 0.0

    def test_distances_non_decreasing(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(30, 4))
        _, dists = knn_graph(points, 10)
        assert np.all(np.diff(dists, axis=1) >= 0)

    def test_k_too_large_rejected(self):
        with pytest.raises(ConfigError):
            knn_graph(np.zeros((4, 2)), 4)

    def test_tie_broken_by_lower_row_id(self):
        points = np.array([[0.0], [1.0], [-1.0], [3.0]])
        idx, _ = knn_graph(points, 2)
        # rows 1 and 2 are equidistant from row 0; lower id (1) first
        assert idx[0].tolist() == [1, 2]


class TestCurveParams:
    def test_min_dist_point_one_reference_values(self):
        a, b = fit_curve_params(0.1)
        assert a == pytest.approx(1.577, abs=0.05)
        assert b == pytest.approx(0.895, abs=0.05)


class TestFitEmbedding:
    def test_zero_epochs_returns_seeded_init(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(30, 4))
        cfg = UmapConfig(n_neighbors=5, n_epochs=0, seed=42)
        model = fit_embedding(points, cfg)
        assert model.embedding.coords.shape == (30, 2)
        assert np.all(np.abs(model.embedding.coords) <= 10.0)
        again = fit_embedding(points, cfg)
        assert np.array_equal(model.embedding.coords, again.embedding.coords)

    def test_same_seed_bitwise_identical(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(60, 3))
        cfg = UmapConfig(n_neighbors=8, n_epochs=30, seed=7)
        c1 = fit_embedding(points, cfg).embedding.coords
        c2 = fit_embedding(points, cfg).embedding.coords
        assert np.array_equal(c1, c2)

    def test_sigma_residual_or_recorded_fallback(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(50, 4))
        cfg = UmapConfig(n_neighbors=10, n_epochs=0, seed=1)
        model = fit_embedding(points, cfg)
        _, dists = knn_graph(points, cfg.n_neighbors)
        target = np.log2(cfg.n_neighbors)
        for i in range(50):
            gap = np.maximum(dists[i] - model.rhos[i], 0.0)
            resid = abs(np.sum(np.exp(-gap / model.sigmas[i])) - target)
            assert resid <= 1e-3 or model.sigma_fallbacks > 0

    def test_identical_points_use_fallback_without_error(self):
        points = np.zeros((20, 3))
        cfg = UmapConfig(n_neighbors=5, n_epochs=10, seed=2)
        model = fit_embedding(points, cfg)
        assert model.sigma_fallbacks == 20
        assert np.all(np.isfinite(model.embedding.coords))

    def test_symmetrized_weights_valid(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(40, 3))
        model = fit_embedding(points, UmapConfig(n_neighbors=6, n_epochs=0, seed=3))
        w = {}
        for i, j, v in zip(model.graph_rows, model.graph_cols, model.graph_weights):
            assert 0.0 <= v <= 1.0
            w[(int(i), int(j))] = v
        for (i, j), v in w.items():
            assert w[(j, i)] == pytest.approx(v, abs=1e-12)

    def test_blob_separation(self):
        points, labels = two_blobs(seed=11)
        cfg = UmapConfig(n_neighbors=15, n_epochs=100, seed=5)
        coords = fit_embedding(points, cfg).embedding.coords
        assert silhouette_score(coords, labels) > 0.5

    def test_blob_separation_across_five_seeds(self):
        points, labels = two_blobs(n_per=100, seed=13)
        for seed in range(5):
            cfg = UmapConfig(n_neighbors=15, n_epochs=100, seed=seed)
            coords = fit_embedding(points, cfg).embedding.coords
            assert silhouette_score(coords, labels) > 0.5

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        points = rng.normal(size=(40, 3))
        cfg = UmapConfig(n_neighbors=6, n_epochs=25, seed=9)
        base = fit_embedding(points, cfg).embedding.coords
        perm = rng.permutation(40)
        permuted = fit_embedding(points[perm], cfg).embedding.coords
        assert np.allclose(permuted, base[perm], atol=1e-12)

    def test_too_few_rows_rejected(self):
        with pytest.raises(ConfigError):
            fit_embedding(np.zeros((10, 2)), UmapConfig(n_neighbors=10))


class TestTransform:
    def fitted(self, seed=0, n=60):
        rng = np.random.default_rng(seed)
        points = rng.normal(size=(n, 4))
        model = fit_embedding(points, UmapConfig(n_neighbors=8, n_epochs=30, seed=1))
        return points, model

    def test_coincident_test_point_lands_on_train_point(self):
        points, model = self.fitted()
        out = transform_embedding(model, points[3:4], k=5)
        assert np.allclose(out.coords[0], model.embedding.coords[3], atol=1e-6)

    def test_equidistant_pair_gives_midpoint(self):
        train = np.array([[0.0, 0.0], [2.0, 0.0]])
        model = EmbeddingModel(
            embedding=fit_embedding(
                np.random.default_rng(0).normal(size=(5, 2)),
                UmapConfig(n_neighbors=2, n_epochs=0, seed=0),
            ).embedding,
            train_points=train,
            graph_rows=np.zeros(0, dtype=np.int64),
            graph_cols=np.zeros(0, dtype=np.int64),
            graph_weights=np.zeros(0),
            sigmas=np.ones(2),
            rhos=np.zeros(2),
            sigma_fallbacks=0,
            curve_a=1.0,
            curve_b=1.0,
        )
        model.embedding.coords = np.array([[0.0, 0.0], [4.0, 2.0]])
        out = transform_embedding(model, np.array([[1.0, 0.0]]), k=2)
        assert np.allclose(out.coords[0], [2.0, 1.0], atol=1e-9)

    def test_train_points_land_in_neighbor_hull(self):
        # transforming the train set: each output is a convex combination
        # of its k nearest train coordinates (self included at distance 0)
        points, model = self.fitted(seed=3)
        k = 6
        out = transform_embedding(model, points, k=k)
        dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        for i in range(points.shape[0]):
            hull_pts = model.embedding.coords[order[i]]
            lo = hull_pts.min(axis=0) - 1e-9
            hi = hull_pts.max(axis=0) + 1e-9
            assert np.all(out.coords[i] >= lo) and np.all(out.coords[i] <= hi)

    def test_width_mismatch_rejected(self):
        _, model = self.fitted()
        with pytest.raises(ValidationError):
            transform_embedding(model, np.zeros((2, 9)))
