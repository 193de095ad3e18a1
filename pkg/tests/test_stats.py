import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subshap.errors import ValidationError
from subshap.stats import (
    ComparisonResult,
    FeatureRanking,
    auprc,
    bootstrap_metrics,
    chi_squared_test,
    log_loss,
    mann_whitney_u,
    rank_compare,
    significance_stars,
    top_features,
)

from oracles import auprc_sweep, chi2_sf_closed_form, mwu_enumeration


class TestAuprc:
    def test_perfect_ranking(self):
        y = np.array([0, 0, 1, 1])
        s = np.array([0.1, 0.2, 0.8, 0.9])
        assert auprc(y, s) == 1.0

    def test_all_scores_equal_gives_prevalence(self):
        y = np.array([1, 0, 0, 0, 1])
        s = np.full(5, 0.3)
        assert auprc(y, s) == pytest.approx(0.4, abs=1e-15)

    def test_hand_computed_interleaved(self):
        # recall steps land at precision 1 then 2/3: 0.5*1 + 0.5*(2/3) = 5/6
        y = np.array([1, 0, 1, 0])
        s = np.array([0.9, 0.8, 0.7, 0.6])
        assert auprc(y, s) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            auprc(np.ones(4), np.arange(4.0))

    def test_matches_sweep_oracle_on_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = rng.integers(5, 200)
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            scores = np.round(rng.random(n), 2)  # force ties
            assert auprc(y, scores) == pytest.approx(
                auprc_sweep(y, scores), abs=1e-12
            )

    @given(st.integers(10, 60), st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_invariant_under_monotone_transform(self, n, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        s = rng.random(n)
        assert auprc(y, s) == pytest.approx(
            auprc(y, np.exp(3.0 * s) + 1.0), abs=1e-12
        )


class TestLogLoss:
    def test_exact_predictions(self):
        y = np.array([0.0, 1.0, 1.0])
        assert log_loss(y, y) <= 2e-15

    def test_coin_flip(self):
        y = np.array([0, 1, 0, 1])
        assert log_loss(y, np.full(4, 0.5)) == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_wrong_is_clamped(self):
        assert log_loss(np.array([1.0]), np.array([0.0])) == pytest.approx(
            -math.log(1e-15), rel=1e-9
        )


class TestBootstrap:
    def test_single_replicate_median(self):
        y = np.array([0, 1, 0, 1, 0, 1])
        s = np.array([0.1, 0.9, 0.2, 0.8, 0.3, 0.7])
        out = bootstrap_metrics(y, s, b=1, seed=5)
        assert out["auprc"].median == out["auprc"].values[0]

    def test_same_seed_identical(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 80)
        s = rng.random(80)
        a = bootstrap_metrics(y, s, b=25, seed=9)
        b = bootstrap_metrics(y, s, b=25, seed=9)
        assert a["auprc"].values == b["auprc"].values
        assert a["log_loss"].values == b["log_loss"].values

    def test_perfect_scores_zero_iqr(self):
        n = 2000
        y = np.array([0, 1] * (n // 2))
        s = np.where(y == 1, 0.9, 0.1)
        out = bootstrap_metrics(y, s, b=40, seed=3, metrics=("auprc",))
        assert all(v == 1.0 for v in out["auprc"].values)
        assert out["auprc"].iqr == 0.0

    def test_constant_metric_median_is_constant(self):
        y = np.array([0, 1, 0, 1, 1, 0, 1, 0])
        s = np.where(y == 1, 1.0, 0.0)
        for b in (1, 2, 7, 16):
            out = bootstrap_metrics(y, s, b=b, seed=b, metrics=("auprc",))
            assert out["auprc"].median == 1.0


class TestMannWhitney:
    def test_identical_constant_vectors(self):
        res = mann_whitney_u(np.full(6, 2.0), np.full(9, 2.0))
        assert res.u_statistic == 6 * 9 / 2.0
        assert res.p_value == 1.0

    def test_fully_separated_large(self):
        a = np.arange(100.0, 120.0)
        b = np.arange(0.0, 20.0)
        res = mann_whitney_u(a, b)
        # z = (U - nm/2 - 0.5)/sigma with sigma^2 = nm(n+m+1)/12
        sigma = math.sqrt(20 * 20 * 41 / 12.0)
        z = (400 - 200 - 0.5) / sigma
        assert res.u_statistic == 400
        assert res.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-12)
        assert res.p_value < 0.001

    def test_exact_branch_matches_enumeration(self):
        rng = np.random.default_rng(21)
        for _ in range(6):
            a = rng.normal(size=5)
            b = rng.normal(size=5) + rng.normal() * 0.5
            u_ref, p_ref = mwu_enumeration(a, b)
            res = mann_whitney_u(a, b)
            assert res.u_statistic == pytest.approx(u_ref, abs=1e-9)
            assert res.p_value == pytest.approx(p_ref, abs=1e-12)

    def test_exact_branch_unbalanced_sizes(self):
        rng = np.random.default_rng(33)
        a = rng.normal(size=4)
        b = rng.normal(size=11)
        u_ref, p_ref = mwu_enumeration(a, b)
        res = mann_whitney_u(a, b)
        assert res.u_statistic == pytest.approx(u_ref, abs=1e-9)
        assert res.p_value == pytest.approx(p_ref, abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=rng.integers(3, 30))
        b = rng.normal(size=rng.integers(3, 30))
        r1 = mann_whitney_u(a, b)
        r2 = mann_whitney_u(b, a)
        assert r1.u_statistic + r2.u_statistic == pytest.approx(len(a) * len(b))
        assert r1.p_value == pytest.approx(r2.p_value, abs=1e-12)


class TestStars:
    @pytest.mark.parametrize(
        "p,expected",
        [(0.0009, "***"), (0.05, "ns"), (0.04, "*"), (0.009, "**"), (0.2, "ns"),
         (0.001, "**"), (0.01, "*")],
    )
    def test_thresholds_are_strict(self, p, expected):
        assert significance_stars(p) == expected


class TestChiSquared:
    def test_reference_quantile(self):
        # df=1 upper 5% point; construct a 2x2 table hitting 3.841 closely
        # is fiddly, so drive the tail function through a synthetic table
        # and compare at the computed statistic instead.
        feature = np.array(["a"] * 30 + ["b"] * 30)
        y = np.concatenate([np.repeat([0, 1], [20, 10]), np.repeat([0, 1], [12, 18])])
        stat, p, _ = chi_squared_test(feature, y)
        assert p == pytest.approx(chi2_sf_closed_form(stat, 1), abs=5e-4)

    def test_exactly_proportional_table(self):
        feature = np.array(["x"] * 10 + ["y"] * 20)
        y = np.array([0, 1] * 5 + [0, 1] * 10)
        stat, p, _ = chi_squared_test(feature, y)
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_perfect_association_2x2(self):
        feature = np.array(["u"] * 20 + ["v"] * 20)
        y = np.array([1] * 20 + [0] * 20)
        stat, p, _ = chi_squared_test(feature, y)
        assert stat == pytest.approx(40.0, abs=1e-9)
        assert p == pytest.approx(chi2_sf_closed_form(40.0, 1), rel=1e-6)
        assert p == pytest.approx(2.5e-10, rel=5e-2)

    def test_relabel_invariance(self):
        rng = np.random.default_rng(4)
        feature = rng.choice(list("abc"), size=120)
        y = rng.integers(0, 2, 120)
        stat1, p1, _ = chi_squared_test(feature, y)
        relabeled = np.char.add("zz_", feature)
        stat2, p2, _ = chi_squared_test(relabeled, y)
        assert stat1 == pytest.approx(stat2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_constant_feature_raises(self):
        with pytest.raises(ValidationError):
            chi_squared_test(np.array(["a"] * 10), np.array([0, 1] * 5))

    def test_low_expected_count_warning(self):
        feature = np.array(["a"] * 4 + ["b"] * 40)
        y = np.array([0, 1] * 2 + [0, 1] * 20)
        _, _, warn = chi_squared_test(feature, y)
        assert warn


class TestRankings:
    def test_zero_column_ranks_last(self):
        values = np.array([[1.0, 0.0, -2.0], [3.0, 0.0, 2.0]])
        ranking = top_features(values, ["a", "b", "c"], k=3)
        assert ranking.features == ["a", "c", "b"]

    def test_full_k_gives_total_order(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=(20, 6))
        ranking = top_features(values, [f"f{i}" for i in range(6)], k=6)
        assert len(ranking.features) == 6
        scores = [s for _, s in ranking.entries]
        assert scores == sorted(scores, reverse=True)

    def test_scaling_a_column_never_lowers_it(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=(30, 5))
        names = [f"f{i}" for i in range(5)]
        before = top_features(values, names, k=5).features.index("f2")
        boosted = values.copy()
        boosted[:, 2] *= 10
        after = top_features(boosted, names, k=5).features.index("f2")
        assert after <= before

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(10)
        values = rng.normal(size=(25, 4))
        names = list("wxyz")
        perm = rng.permutation(25)
        base = top_features(values, names, k=4)
        shuffled = top_features(values[perm], names, k=4)
        assert base.features == shuffled.features
        assert [s for _, s in base.entries] == pytest.approx(
            [s for _, s in shuffled.entries], abs=1e-12
        )

    def test_rank_compare_identity(self):
        r = FeatureRanking([("a", 3.0), ("b", 2.0), ("c", 1.0)])
        jac, deltas = rank_compare(r, r)
        assert jac == 1.0
        assert deltas == {"a": 0, "b": 0, "c": 0}

    def test_rank_compare_disjoint(self):
        r1 = FeatureRanking([("a", 2.0), ("b", 1.0)])
        r2 = FeatureRanking([("c", 2.0), ("d", 1.0)])
        jac, deltas = rank_compare(r1, r2)
        assert jac == 0.0
        assert deltas == {}

    def test_rank_compare_one_shared_of_five(self):
        r1 = FeatureRanking([(f, 5.0 - i) for i, f in enumerate("abcde")])
        r2 = FeatureRanking([(f, 5.0 - i) for i, f in enumerate("afghi")])
        jac, _ = rank_compare(r1, r2)
        assert jac == pytest.approx(1.0 / 9.0)


def test_comparison_result_stars_consistent():
    res = mann_whitney_u(np.arange(20.0), np.arange(20.0) + 100)
    assert isinstance(res, ComparisonResult)
    assert res.stars == significance_stars(res.p_value)
