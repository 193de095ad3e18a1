import itertools

import numpy as np
import pytest

from subshap.errors import ConfigError, ValidationError
from subshap.gbdt import (
    Hyperparams,
    TreeEnsemble,
    TreeNode,
    fit,
    flatten_tree,
    predict_margin,
    predict_proba,
    tune_and_fit,
)
from subshap.stats import auprc, log_loss


def exhaustive_best_split(X, g, h, lam, min_child_weight):
    """Reference argmax over every (feature, midpoint-threshold) candidate."""
    g_sum, h_sum = g.sum(), h.sum()
    best = None
    for j in range(X.shape[1]):
        for thr in sorted(set(np.convolve(np.unique(X[:, j]), [0.5, 0.5], "valid"))):
            left = X[:, j] < thr
            gl, hl = g[left].sum(), h[left].sum()
            gr, hr = g_sum - gl, h_sum - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gain = 0.5 * (
                gl**2 / (hl + lam) + gr**2 / (hr + lam) - g_sum**2 / (h_sum + lam)
            )
            if best is None or gain > best[0] + 1e-12:
                best = (gain, j, thr)
    return best


def small_problem(seed=0, n=60, d=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    logits = 1.5 * X[:, 0] - 1.0 * X[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


class TestFit:
    def test_no_split_degenerate_predicts_prevalence(self):
        X, y = small_problem()
        hp = Hyperparams(n_trees=5, max_depth=2, min_split_gain=1e12)
        model = fit(X, y, hp)
        p = predict_proba(model, X)
        assert np.allclose(p, y.mean(), atol=1e-12)

    def test_perfect_separator_chosen_at_root(self):
        rng = np.random.default_rng(3)
        n = 40
        X = rng.normal(size=(n, 4))
        y = (rng.random(n) < 0.5).astype(float)
        X[:, 2] = np.where(y == 1, 5.0 + rng.random(n), -5.0 - rng.random(n))
        hp = Hyperparams(n_trees=1, max_depth=1, learning_rate=1.0)
        model = fit(X, y, hp)
        root = model.trees[0]
        assert root.feature == 2
        # cross-check against the exhaustive candidate enumeration
        p0 = np.full(n, y.mean())
        g, h = p0 - y, p0 * (1 - p0)
        ref = exhaustive_best_split(X, g, h, hp.l2_lambda, hp.min_child_weight)
        assert ref[1] == 2
        assert root.threshold == pytest.approx(ref[2], abs=1e-12)

    def test_xor_pattern_separable_at_depth_two(self):
        rng = np.random.default_rng(7)
        n = 200
        X = rng.uniform(size=(n, 2))
        y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(float)
        model = fit(X, y, Hyperparams(n_trees=50, max_depth=2, learning_rate=0.3))
        assert auprc(y, predict_proba(model, X)) == 1.0

    def test_split_matches_exhaustive_enumeration_on_tiny_instances(self):
        rng = np.random.default_rng(11)
        for trial in range(10):
            n = int(rng.integers(8, 20))
            X = np.round(rng.normal(size=(n, 3)), 1)
            y = rng.integers(0, 2, n).astype(float)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            hp = Hyperparams(n_trees=1, max_depth=1)
            model = fit(X, y, hp)
            root = model.trees[0]
            p0 = np.full(n, np.clip(y.mean(), 1e-6, 1 - 1e-6))
            g, h = p0 - y, p0 * (1 - p0)
            ref = exhaustive_best_split(X, g, h, hp.l2_lambda, hp.min_child_weight)
            if ref is None or ref[0] <= hp.min_split_gain:
                assert root.is_leaf
            else:
                assert not root.is_leaf
                left = X[:, root.feature] < root.threshold
                ref_left = X[:, ref[1]] < ref[2]
                gl, hl = g[left].sum(), h[left].sum()
                rgl, rhl = g[ref_left].sum(), h[ref_left].sum()
                gain = 0.5 * (
                    gl**2 / (hl + 1) + (g.sum() - gl) ** 2 / (h.sum() - hl + 1)
                    - g.sum() ** 2 / (h.sum() + 1)
                )
                assert gain == pytest.approx(ref[0], abs=1e-9)

    def test_leaf_values_recomputable(self):
        X, y = small_problem(seed=5)
        hp = Hyperparams(n_trees=1, max_depth=3, learning_rate=1.0)
        model = fit(X, y, hp)
        p0 = np.full(y.size, np.clip(y.mean(), 1e-6, 1 - 1e-6))
        g, h = p0 - y, p0 * (1 - p0)

        def check(node, rows):
            if node.is_leaf:
                expected = -g[rows].sum() / (h[rows].sum() + hp.l2_lambda)
                assert node.value == pytest.approx(expected, abs=1e-9)
                assert node.cover == pytest.approx(h[rows].sum(), abs=1e-9)
                return
            left = rows & (X[:, node.feature] < node.threshold)
            assert node.cover == pytest.approx(
                node.left.cover + node.right.cover, abs=1e-9
            )
            check(node.left, left)
            check(node.right, rows & ~(X[:, node.feature] < node.threshold))

        check(model.trees[0], np.ones(y.size, dtype=bool))

    def test_determinism(self):
        X, y = small_problem(seed=9)
        hp = Hyperparams(n_trees=8, max_depth=3)
        m1 = fit(X, y, hp, seed=1)
        m2 = fit(X, y, hp, seed=1)
        assert m1.to_dict() == m2.to_dict()

    def test_training_loss_non_increasing(self):
        X, y = small_problem(seed=13, n=120, d=4)
        hp = Hyperparams(n_trees=30, max_depth=3, learning_rate=0.5)
        model = fit(X, y, hp)
        margin = np.full(y.size, model.base_score)
        losses = [log_loss(y, 1 / (1 + np.exp(-margin)))]
        for tree in model.trees:
            flat = flatten_tree(tree)
            from subshap.gbdt import _tree_predict

            margin = margin + hp.learning_rate * _tree_predict(flat, X)
            losses.append(log_loss(y, 1 / (1 + np.exp(-margin))))
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)

    def test_single_class_rejected(self):
        X = np.zeros((10, 2))
        with pytest.raises(ValidationError):
            fit(X, np.ones(10), Hyperparams(n_trees=1))

    def test_non_finite_feature_rejected(self):
        X, y = small_problem()
        X[0, 0] = np.nan
        with pytest.raises(ValidationError):
            fit(X, y, Hyperparams(n_trees=1))


class TestPredict:
    def test_empty_tree_list_gives_base(self):
        model = TreeEnsemble(trees=[], learning_rate=0.1, base_score=-0.3, n_features=2)
        X = np.zeros((5, 2))
        assert np.allclose(predict_margin(model, X), -0.3)

    def test_duplicated_tree_doubles_contribution(self):
        X, y = small_problem()
        model = fit(X, y, Hyperparams(n_trees=1, max_depth=2))
        doubled = TreeEnsemble(
            trees=model.trees * 2,
            learning_rate=model.learning_rate,
            base_score=model.base_score,
            n_features=model.n_features,
        )
        single = predict_margin(model, X) - model.base_score
        both = predict_margin(doubled, X) - model.base_score
        assert np.allclose(both, 2 * single, atol=1e-12)

    def test_sigmoid_midpoint_and_monotonicity(self):
        model = TreeEnsemble(trees=[], learning_rate=0.1, base_score=0.0, n_features=1)
        assert predict_proba(model, np.zeros((1, 1)))[0] == 0.5
        X, y = small_problem(seed=2)
        trained = fit(X, y, Hyperparams(n_trees=5, max_depth=2))
        margins = predict_margin(trained, X)
        probs = predict_proba(trained, X)
        order = np.argsort(margins)
        assert np.all(np.diff(probs[order]) >= 0)

    def test_trained_model_beats_base_rate(self):
        X, y = small_problem(seed=21, n=150)
        model = fit(X, y, Hyperparams(n_trees=10, max_depth=3))
        base_only = np.full(y.size, 1 / (1 + np.exp(-model.base_score)))
        assert log_loss(y, predict_proba(model, X)) < log_loss(y, base_only)

    def test_shape_mismatch_rejected(self):
        model = TreeEnsemble(trees=[], learning_rate=0.1, base_score=0.0, n_features=3)
        with pytest.raises(ValidationError):
            predict_margin(model, np.zeros((4, 2)))


class TestTuneAndFit:
    def test_single_point_grid(self):
        X, y = small_problem(seed=31, n=100)
        hp = Hyperparams(n_trees=5, max_depth=2)
        model, chosen, record = tune_and_fit(X, y, [hp], seed=3)
        assert chosen == hp
        assert record.chosen_index == 0
        assert model.n_training_rows == 100

    def test_dominant_grid_point_wins(self):
        X, y = small_problem(seed=41, n=160, d=4)
        weak = Hyperparams(n_trees=1, max_depth=1, learning_rate=0.01)
        strong = Hyperparams(n_trees=40, max_depth=3, learning_rate=0.2)
        _, chosen, record = tune_and_fit(X, y, [weak, strong], seed=5)
        scores = [e["val_auprc"] for e in record.entries]
        assert record.chosen_index == int(np.argmax(scores))
        if scores[1] > scores[0]:
            assert chosen == strong

    def test_refit_uses_all_rows(self):
        X, y = small_problem(seed=51, n=90)
        model, _, _ = tune_and_fit(X, y, [Hyperparams(n_trees=3, max_depth=2)], seed=7)
        assert model.n_training_rows == 90

    def test_empty_grid_rejected(self):
        X, y = small_problem()
        with pytest.raises(ConfigError):
            tune_and_fit(X, y, [], seed=0)


class TestSerialization:
    def test_json_round_trip_exact(self, tmp_path):
        X, y = small_problem(seed=61)
        model = fit(X, y, Hyperparams(n_trees=4, max_depth=3))
        path = tmp_path / "model.json"
        model.save(path)
        loaded = TreeEnsemble.load(path)
        assert loaded.to_dict() == model.to_dict()
        assert np.array_equal(predict_margin(loaded, X), predict_margin(model, X))
