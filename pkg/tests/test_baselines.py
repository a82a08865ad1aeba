import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skidcast.baselines import (DesignMatrix, FitConfig, SingularMatrixError, fit_column_filter, fit_forest, fit_gbt,
                                fit_knn, fit_linear, fit_mlp, fit_tree, predict_knn)
from skidcast.baselines.mlp import init_mlp, mlp_loss
from skidcast.tensor import grad_check


def regression_data(n=60, p=4, seed=0, noise=0.1):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, p))
    y = X @ r.normal(size=p) + np.sin(X[:, 0]) + noise * r.normal(size=n)
    return X, y


def brute_knn(X, y, q, k):
    d = [(float(np.sum((x - q) ** 2)), i) for i, x in enumerate(X)]
    d.sort()  # distance, then lower index
    return float(np.mean([y[i] for _, i in d[:k]]))


class TestLinear:
    def test_two_point_ols(self):
        m = fit_linear("ols", np.array([[0.0], [1.0]]), np.array([1.0, 3.0]))
        assert abs(m.intercept - 1.0) <= 1e-12
        assert abs(m.coef[0] - 2.0) <= 1e-12

    def test_ridge_zero_is_ols(self):
        for seed in range(5):
            X, y = regression_data(seed=seed)
            a, b = fit_linear("ols", X, y), fit_linear("ridge", X, y, 0.0)
            np.testing.assert_allclose(b.coef, a.coef, atol=1e-9)
            assert abs(a.intercept - b.intercept) <= 1e-9

    def test_lasso_soft_threshold_on_orthonormal_design(self):
        r = np.random.default_rng(3)
        n, p = 40, 5
        Z = r.normal(size=(n, p))
        Z -= Z.mean(axis=0)
        Q, _ = np.linalg.qr(Z)  # centred, orthonormal columns
        y = Q @ np.array([3.0, -2.0, 0.5, -0.2, 1.2]) + 0.3 * r.normal(size=n)
        ols = fit_linear("ols", Q, y).coef
        for lam in (0.0, 0.4, 1.0, 2.5):
            lasso = fit_linear("lasso", Q, y, lam).coef
            expected = np.sign(ols) * np.maximum(np.abs(ols) - lam, 0.0)
            np.testing.assert_allclose(lasso, expected, atol=1e-8)

    def test_singular_ols_suggests_ridge(self):
        X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(SingularMatrixError, match="ridge"):
            fit_linear("ols", X, np.array([1.0, 2.0, 3.0]))
        fit_linear("ridge", X, np.array([1.0, 2.0, 3.0]), 0.5)

    def test_ridge_norm_shrinks_with_lambda(self):
        X, y = regression_data(seed=4)
        norms = [np.linalg.norm(fit_linear("ridge", X, y, lam).coef) for lam in (0, 0.1, 1, 10, 100)]
        assert all(b <= a for a, b in zip(norms, norms[1:]))

    def test_intercept_is_unpenalised(self):
        X, y = regression_data(seed=5)
        m = fit_linear("ridge", X, y + 100.0, 1e6)
        assert abs(m.intercept - (y.mean() + 100.0)) < 0.1

    def test_rejects_unknown_kind_and_negative_lambda(self):
        X, y = regression_data()
        with pytest.raises(ValueError):
            fit_linear("elastic", X, y)
        with pytest.raises(ValueError):
            fit_linear("lasso", X, y, -1.0)


class TestKNN:
    def test_k1_returns_training_target(self):
        X, y = regression_data(seed=6)
        m = fit_knn(X, y, 1)
        assert predict_knn(m, X[7]) == y[7]

    def test_k_equals_n_gives_mean(self):
        X, y = regression_data(n=15, seed=7)
        assert predict_knn(fit_knn(X, y, 15), np.zeros(4)) == pytest.approx(y.mean(), abs=1e-12)

    def test_three_points(self):
        X = np.array([[0.0], [1.0], [10.0]])
        assert predict_knn(fit_knn(X, np.array([1.0, 2.0, 10.0]), 2), np.array([0.4])) == 1.5

    def test_ties_prefer_lower_index(self):
        X = np.array([[1.0], [-1.0], [1.0]])
        m = fit_knn(X, np.array([5.0, 7.0, 9.0]), 1)
        assert predict_knn(m, np.array([0.0])) == 5.0

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            fit_knn(np.zeros((3, 1)), np.zeros(3), 4)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 4), st.integers(0, 10_000))
    def test_matches_brute_force(self, n, p, seed):
        r = np.random.default_rng(seed)
        X = np.round(r.normal(size=(n, p)), 1)  # rounding forces distance ties
        y = r.normal(size=n)
        k = int(r.integers(1, n + 1))
        m = fit_knn(X, y, k)
        Q = np.round(r.normal(size=(5, p)), 1)
        got = m.predict(Q)
        for q, g in zip(Q, got):
            assert g == pytest.approx(brute_knn(X, y, q, k), abs=1e-12)


class TestTree:
    def test_depth_zero_is_mean(self):
        X, y = regression_data(seed=8)
        t = fit_tree(X, y, max_depth=0)
        assert t.n_nodes == 1
        np.testing.assert_allclose(t.predict(X), y.mean(), atol=1e-12)

    def test_separable_four_points(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        t = fit_tree(X, y, max_depth=1, min_samples_leaf=1)
        assert t.threshold[0] == 0.5
        assert sorted(t.value[[t.left[0], t.right[0]]]) == [0.0, 1.0]
        assert np.mean((t.predict(X) - y) ** 2) == 0.0

    def test_constant_target_single_leaf(self):
        X, _ = regression_data(seed=9)
        assert fit_tree(X, np.full(len(X), 2.0), max_depth=6).n_nodes == 1

    def test_thresholds_are_midpoints(self):
        X, y = regression_data(n=40, seed=10)
        t = fit_tree(X, y, max_depth=4)
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            f = t.feature[node]
            if f < 0:
                continue
            # midpoint of two consecutive values among the rows reaching the node
            vals = np.unique(X[rows, f])
            mids = (vals[1:] + vals[:-1]) / 2
            assert t.threshold[node] in mids
            go_left = X[rows, f] <= t.threshold[node]
            stack += [(t.left[node], rows[go_left]), (t.right[node], rows[~go_left])]

    def test_tie_breaks_to_lower_feature(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        t = fit_tree(X, np.array([0.0, 0.0, 1.0, 1.0]), max_depth=1, min_samples_leaf=1)
        assert t.feature[0] == 0

    def test_min_samples_leaf(self):
        X, y = regression_data(n=50, seed=11)
        t = fit_tree(X, y, max_depth=10, min_samples_leaf=5)
        leaves = t.predict(X)
        _, counts = np.unique(leaves, return_counts=True)
        assert counts.min() >= 5

    def test_train_mse_non_increasing_in_depth(self):
        X, y = regression_data(n=80, seed=12)
        mse = [np.mean((fit_tree(X, y, d, 1).predict(X) - y) ** 2) for d in range(8)]
        assert all(b <= a + 1e-15 for a, b in zip(mse, mse[1:]))


class TestForest:
    def test_degenerate_forest_is_a_tree(self):
        X, y = regression_data(seed=13)
        tree = fit_tree(X, y, 5, 2)
        forest = fit_forest(X, y, n_trees=3, feature_fraction=1.0, bootstrap=False, max_depth=5,
                            min_samples_leaf=2, seed=4)
        for t in forest.trees:
            for a, b in zip(t.arrays().values(), tree.arrays().values()):
                np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(forest.predict(X), tree.predict(X))

    def test_same_seed_same_forest(self):
        X, y = regression_data(seed=14)
        a = fit_forest(X, y, n_trees=5, seed=2)
        b = fit_forest(X, y, n_trees=5, seed=2)
        np.testing.assert_array_equal(a.predict(X), b.predict(X))
        c = fit_forest(X, y, n_trees=5, seed=3)
        assert not np.array_equal(a.predict(X), c.predict(X))

    def test_prediction_is_tree_average(self):
        X, y = regression_data(seed=15)
        f = fit_forest(X, y, n_trees=5, seed=1)
        by_hand = sum(t.predict(X) for t in f.trees) / 5
        np.testing.assert_allclose(f.predict(X), by_hand, atol=1e-12)

    def test_tree_streams_are_independent_of_count(self):
        X, y = regression_data(seed=16)
        small = fit_forest(X, y, n_trees=3, seed=9)
        big = fit_forest(X, y, n_trees=6, seed=9)
        # SeedSequence.spawn(k)[i] does not depend on k
        np.testing.assert_array_equal(small.predict_each(X), big.predict_each(X)[:3])


class TestBoosting:
    def test_single_depth_zero_round_is_mean(self):
        X, y = regression_data(seed=17)
        m = fit_gbt(X, y, n_rounds=1, max_depth=0)
        np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-12)

    def test_separable_points_fit_exactly(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 5.0, -1.0, 2.0])
        m = fit_gbt(X, y, n_rounds=20, shrinkage=1.0, max_depth=2)
        assert m.train_mse[-1] <= 1e-6

    def test_training_mse_monotone(self):
        for seed in range(10):
            X, y = regression_data(n=50, seed=100 + seed)
            m = fit_gbt(X, y, n_rounds=40, shrinkage=0.3, max_depth=2)
            assert all(b <= a + 1e-12 for a, b in zip(m.train_mse, m.train_mse[1:]))
            assert len(m.train_mse) == 41

    def test_argument_checks(self):
        X, y = regression_data()
        with pytest.raises(ValueError):
            fit_gbt(X, y, n_rounds=0)
        with pytest.raises(ValueError):
            fit_gbt(X, y, shrinkage=1.5)


class TestMLP:
    def test_gradient_check(self):
        r = np.random.default_rng(18)
        X, y = r.normal(size=(6, 3)), r.normal(size=6)
        params = init_mlp(3, 4, r)
        params["b1"] = r.normal(size=4) * 0.1
        names = list(params)
        err = grad_check(lambda ts: mlp_loss(X, y, dict(zip(names, ts))), [params[n] for n in names])
        assert err <= 1e-5

    def test_constant_target(self):
        X, _ = regression_data(n=40, seed=19)
        m = fit_mlp(X, np.full(40, 4.0), hidden=8, lr=1e-2, epochs=150, batch_size=8, seed=0)
        assert m.loss_history[-1] <= 0.01 * m.loss_history[0]

    def test_deterministic(self):
        X, y = regression_data(n=30, seed=20)
        a = fit_mlp(X, y, hidden=5, epochs=3, seed=4)
        b = fit_mlp(X, y, hidden=5, epochs=3, seed=4)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_zero_width_rejected(self):
        with pytest.raises(ValueError):
            fit_mlp(np.zeros((3, 2)), np.zeros(3), hidden=0)


class TestDesign:
    def test_column_filter_removes_dependent_columns(self):
        r = np.random.default_rng(21)
        a, b = r.normal(size=30), r.normal(size=30)
        X = np.column_stack([a, np.full(30, 3.0), b, 2 * a - b + 1, a])
        cf = fit_column_filter(X)
        np.testing.assert_array_equal(cf.keep, [0, 2])
        fit_linear("ols", cf(X), r.normal(size=30))

    def test_design_matrix_checks(self):
        with pytest.raises(ValueError):
            DesignMatrix(np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            DesignMatrix(np.array([[np.nan]]), np.zeros(1))

    def test_fit_config_ranges(self):
        assert FitConfig().forest_n_trees == 200
        with pytest.raises(ValueError):
            FitConfig(knn_k=0)
        with pytest.raises(ValueError):
            FitConfig(gbt_shrinkage=0.0)
        with pytest.raises(ValueError):
            FitConfig(forest_feature_fraction=1.5)

    def test_predict_preserves_row_order(self):
        X, y = regression_data(seed=22)
        models = [fit_linear("ols", X, y), fit_knn(X, y, 3), fit_tree(X, y), fit_forest(X, y, 4),
                  fit_gbt(X, y, 5), fit_mlp(X, y, 4, epochs=2)]
        perm = np.random.default_rng(0).permutation(len(X))
        for m in models:
            np.testing.assert_allclose(m.predict(X[perm]), m.predict(X)[perm], rtol=0, atol=1e-12)
