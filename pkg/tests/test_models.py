import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from zonalrad.core import FEATURE_NAMES, SchemaError, ValidationError, Zone
from zonalrad.models import (ZONE_GBT_DEFAULTS, EntropyRandomForest, GbtHyperparams, L1LogisticRegression,
                             NewtonBoostingClassifier, RBFSupportVectorClassifier, TrainMatrix,
                             feature_importances, predict_proba, train_gbt, train_logreg_l1,
                             train_random_forest, train_svm_rbf, zone_defaults)
from zonalrad.models._tree import best_entropy_split, binary_entropy
from zonalrad.models.boosting import log_loss
from zonalrad.models.logistic import kkt_violation


def noisy(rng, n=80, d=26, noise=1.0):
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, d) + rng.normal(0, 50, d)
    margin = (X[:, 0] - X[:, 0].mean()) / X[:, 0].std() - (X[:, 3] - X[:, 3].mean()) / X[:, 3].std()
    y = (margin + noise * rng.normal(size=n) > 0).astype(int)
    return X, y


def tree_depth(tree, node=0):
    if tree.left[node] < 0:
        return 0
    return 1 + max(tree_depth(tree, tree.left[node]), tree_depth(tree, tree.right[node]))


ALL = [lambda: L1LogisticRegression(lam=0.01), lambda: RBFSupportVectorClassifier(),
       lambda: EntropyRandomForest(n_estimators=20), lambda: NewtonBoostingClassifier(20)]


class TestContract:
    @pytest.mark.parametrize("make", ALL)
    def test_probability_range_and_determinism(self, make, rng):
        X, y = noisy(rng)
        a, b = make().fit(X, y), make().fit(X, y)
        rows = rng.normal(size=(30, 26)) * 1e3
        p = a.positive_proba(rows)
        assert np.all((0 <= p) & (p <= 1))
        assert np.array_equal(p, b.positive_proba(rows))
        assert np.array_equal(predict_proba(a, rows), p)
        assert a.predict_proba(rows).shape == (30, 2)

    @pytest.mark.parametrize("make", ALL)
    def test_width_mismatch(self, make, rng):
        X, y = noisy(rng)
        with pytest.raises(SchemaError):
            make().fit(X, y).positive_proba(np.zeros((2, 25)))

    @pytest.mark.parametrize("make", ALL)
    def test_non_finite_rows(self, make, rng):
        X, y = noisy(rng)
        m = make().fit(X, y)
        bad = np.zeros((1, 26))
        bad[0, 2] = np.nan
        with pytest.raises(ValidationError):
            m.positive_proba(bad)
        with pytest.raises(ValidationError):
            make().fit(np.where(np.arange(26) == 1, np.inf, X), y)

    def test_train_matrix(self, rng):
        with pytest.raises(ValidationError):
            TrainMatrix(np.zeros((3, 26)), [0, 1, 2])
        assert TrainMatrix(np.zeros((2, 26)), [0, 1], "tz").zone is Zone.TZ

    def test_svm_has_no_importances(self, rng):
        X, y = noisy(rng)
        with pytest.raises(ValidationError, match="svm"):
            feature_importances(RBFSupportVectorClassifier().fit(X, y))


class TestLogistic:
    def test_separated_pair(self):
        m = L1LogisticRegression(lam=1e-3).fit([[0.0], [1.0]], [0, 1])
        assert (m.predict([[0.0], [1.0]]) == [0, 1]).all()

    def test_full_shrinkage(self, rng):
        X, y = noisy(rng)
        m = L1LogisticRegression(lam=10.0).fit(X, y)
        assert np.all(m.coef_std_ == 0)
        assert np.allclose(m.positive_proba(rng.normal(size=(5, 26))), y.mean(), atol=1e-9)

    def test_zero_weights_give_half(self, rng):
        X = rng.normal(size=(40, 26))
        y = np.tile([0, 1], 20)
        assert np.allclose(L1LogisticRegression(lam=10.0).fit(X, y).positive_proba(X), 0.5,
                           atol=1e-9)

    def test_unregularized_matches_newton(self, rng):
        for _ in range(3):
            X = rng.normal(size=(30, 3)) * [1.0, 5.0, 0.2] + [0.0, 3.0, -1.0]
            y = (X @ [1.0, 0.3, -2.0] + rng.logistic(scale=3.0, size=30) > 1.0).astype(int)
            m = L1LogisticRegression(lam=0.0, tol=1e-10).fit(X, y)
            theta = oracles.newton_logistic(X.tolist(), y.tolist())
            assert abs(m.intercept_ - theta[0]) < 1e-4
            assert np.max(np.abs(m.coef_ - theta[1:])) < 1e-4

    def test_optimality(self, rng):
        X, y = noisy(rng)
        m = L1LogisticRegression(lam=0.02, tol=1e-8).fit(X, y)
        Z = np.column_stack([np.ones(len(y)), (X - m.mean_) / m.scale_])
        p = 1 / (1 + np.exp(-Z @ np.r_[m.intercept_std_, m.coef_std_]))
        grad = Z.T @ (p - y) / len(y)
        assert kkt_violation(grad, m.coef_std_, 0.02) <= 1e-8
        assert np.any(m.coef_std_ == 0)

    def test_only_feature_three(self, rng):
        X = rng.normal(size=(200, 26))
        y = (X[:, 3] > 0).astype(int)
        imp = feature_importances(L1LogisticRegression(lam=0.1).fit(X, y))
        assert imp.ranking[0] == 3
        assert imp.rows()[0][1] == FEATURE_NAMES[3]

    @given(st.lists(st.floats(0.01, 1000), min_size=26, max_size=26), st.integers(0, 1000))
    def test_scale_invariant_ordering(self, factors, seed):
        r = np.random.default_rng(seed)
        X, y = noisy(r, 60)
        T = r.normal(size=(20, 26)) * X.std(0) + X.mean(0)
        f = np.array(factors)
        a = L1LogisticRegression(lam=0.02).fit(X, y).decision_function(T)
        b = L1LogisticRegression(lam=0.02).fit(X * f, y).decision_function(T * f)
        assert np.allclose(a, b, atol=1e-4)
        order_a, order_b = np.argsort(a), np.argsort(b)
        gaps = np.diff(np.sort(a))
        if gaps.min() > 1e-3:
            assert np.array_equal(order_a, order_b)

    def test_wrapper(self, rng):
        X, y = noisy(rng)
        m = train_logreg_l1(TrainMatrix(X, y, "AS"), lam=0.05)
        assert m.zone_ is Zone.AS and m.lam == 0.05


class TestSvm:
    def clusters(self, rng, n=30):
        X = np.vstack([rng.normal(-4, 1, (n, 26)), rng.normal(4, 1, (n, 26))])
        return X, np.r_[np.zeros(n, int), np.ones(n, int)]

    def test_separable_clusters(self, rng):
        X, y = self.clusters(rng)
        m = RBFSupportVectorClassifier().fit(X, y)
        assert np.all(np.sign(m.decision_function(X)) == np.where(y == 1, 1, -1))
        assert np.all(m.predict(X) == y)

    def test_duplicate_rows(self, rng):
        X, y = self.clusters(rng, 10)
        a = RBFSupportVectorClassifier(C=100.0, tol=1e-10).fit(X, y)
        b = RBFSupportVectorClassifier(C=100.0, tol=1e-10).fit(np.vstack([X, X]), np.r_[y, y])
        assert np.all(a.alpha_ < 100.0)
        T = rng.normal(0, 4, (50, 26))
        assert np.max(np.abs(a.decision_function(T) - b.decision_function(T))) <= 1e-6

    def test_dual_and_kkt(self, rng):
        X, y = noisy(rng)
        m = RBFSupportVectorClassifier(C=0.05).fit(X, y)
        assert m.dual_objective_ >= 0.0
        assert m.kkt_gap_ <= m.tol
        assert np.all((m.alpha_ >= 0) & (m.alpha_ <= 0.05))
        assert abs(np.sum(m.alpha_ * np.where(y == 1, 1, -1))) < 1e-9

    def test_gamma_scale(self, rng):
        X, y = noisy(rng)
        m = RBFSupportVectorClassifier().fit(X, y)
        Z = (X - X.mean(0)) / X.std(0)
        assert math.isclose(m.gamma_, 1 / (26 * Z.var()))

    def test_monotone_calibration(self, rng):
        X, y = noisy(rng)
        m = train_svm_rbf(TrainMatrix(X, y, "PZ"))
        T = rng.normal(size=(40, 26)) * X.std(0) + X.mean(0)
        d, p = m.decision_function(T), m.positive_proba(T)
        assert np.all(np.diff(p[np.argsort(d)]) >= 0)

    def test_bad_c(self, rng):
        X, y = noisy(rng)
        with pytest.raises(ValidationError):
            RBFSupportVectorClassifier(C=0).fit(X, y)


class TestForest:
    def test_single_label(self, rng):
        m = EntropyRandomForest(n_estimators=5).fit(rng.normal(size=(10, 26)), np.ones(10, int))
        assert all(t.node_count == 1 for t in m.estimators_)
        assert np.all(m.positive_proba(rng.normal(size=(4, 26))) == 1.0)

    def test_one_sample(self, rng):
        x = rng.normal(size=(1, 26))
        m = EntropyRandomForest(n_estimators=1).fit(x, [1])
        assert m.positive_proba(x)[0] == 1.0

    def test_perfect_split_gain(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        gain, feature, threshold, left = best_entropy_split(X, np.array([0, 0, 1, 1]),
                                                            np.arange(4), np.array([0]))
        assert gain == 1.0 and threshold == 1.0 and left.tolist() == [True, True, False, False]
        assert gain == oracles.entropy_bits([0, 0, 1, 1])
        assert binary_entropy(0.5) == 1.0

    def test_importances_sum(self, rng):
        X, y = noisy(rng)
        imp = EntropyRandomForest(n_estimators=30).fit(X, y).feature_importances()
        assert abs(imp.sum() - 1.0) <= 1e-9 and np.all(imp >= 0)
        assert set(np.argsort(-imp)[:2]) == {0, 3}

    def test_candidates_per_split(self):
        assert EntropyRandomForest()._n_candidates(26) == 6

    def test_workers_do_not_change_result(self, rng):
        X, y = noisy(rng)
        T = rng.normal(size=(20, 26)) * X.std(0)
        a = EntropyRandomForest(n_estimators=16, random_state=4).fit(X, y)
        b = EntropyRandomForest(n_estimators=16, random_state=4, n_jobs=2).fit(X, y)
        assert np.array_equal(a.positive_proba(T), b.positive_proba(T))

    def test_wrapper(self, rng):
        X, y = noisy(rng)
        m = train_random_forest(TrainMatrix(X, y, "TZ"), n_trees=3, seed=9)
        assert len(m.estimators_) == 3 and m.zone_ is Zone.TZ


class TestBoosting:
    def test_no_trees(self, rng):
        X, y = noisy(rng)
        assert np.all(NewtonBoostingClassifier(n_estimators=0).fit(X, y).positive_proba(X) == 0.5)

    def test_zero_eta(self, rng):
        X, y = noisy(rng)
        m = NewtonBoostingClassifier(n_estimators=25, eta=0.0).fit(X, y)
        assert np.all(m.positive_proba(rng.normal(size=(10, 26))) == 0.5)

    def test_descent(self, rng):
        X, y = noisy(rng, 120, noise=0.5)
        m = NewtonBoostingClassifier(100, eta=0.1, gamma=0.0, subsample=1.0,
                                     colsample_bytree=1.0).fit(X, y)
        loss = np.array(m.train_loss_)
        assert len(loss) == 101 and np.all(np.diff(loss) <= 0)
        assert math.isclose(loss[-1], log_loss(y, m.decision_function(X)))

    def test_table_defaults(self):
        assert zone_defaults("PZ") == GbtHyperparams(0.73, 0.009, 0.058, 4, 122, 0.63)
        assert zone_defaults("TZ") == GbtHyperparams(0.70, 0.255, 0.155, 2, 132, 0.65)
        assert zone_defaults("AS") == GbtHyperparams(0.71, 0.013, 0.143, 2, 117, 0.99)
        assert zone_defaults(Zone.PZ).eta == 0.058
        assert set(ZONE_GBT_DEFAULTS) == set(Zone)

    def test_train_uses_zone_defaults(self, rng):
        X, y = noisy(rng)
        m = train_gbt(TrainMatrix(X, y, "TZ"), seed=1)
        assert m.hyperparams == ZONE_GBT_DEFAULTS[Zone.TZ]
        assert len(m.estimators_) == 132
        assert max(tree_depth(t) for t in m.estimators_) == 2
        with pytest.raises(ValidationError):
            train_gbt(TrainMatrix(X, y))

    def test_gamma_prunes(self, rng):
        X, y = noisy(rng)
        m = NewtonBoostingClassifier(5, gamma=1e9).fit(X, y)
        assert all(t.node_count == 1 for t in m.estimators_)

    def test_importances(self, rng):
        X, y = noisy(rng)
        imp = NewtonBoostingClassifier(30, max_depth=2).fit(X, y).feature_importances()
        assert abs(imp.sum() - 1.0) <= 1e-9
        assert set(np.argsort(-imp)[:2]) == {0, 3}

    @pytest.mark.parametrize("kw", [dict(eta=1.5), dict(subsample=0.0), dict(gamma=-1.0),
                                    dict(colsample_bytree=1.2)])
    def test_invalid_hyperparams(self, kw):
        with pytest.raises(ValidationError):
            GbtHyperparams(**kw)


@pytest.mark.parametrize("make", [lambda: EntropyRandomForest(n_estimators=10, random_state=3),
                                  lambda: NewtonBoostingClassifier(15, max_depth=3,
                                                                   subsample=0.8,
                                                                   colsample_bytree=0.7)])
@pytest.mark.parametrize("transform", [np.exp, lambda v: v ** 3, np.arctan])
def test_trees_ignore_monotone_transforms(make, transform, rng):
    X, y = noisy(rng)
    X = X / X.std(0)
    T = rng.normal(size=(40, 26)) * 1.5
    j = 3
    X2, T2 = X.copy(), T.copy()
    X2[:, j], T2[:, j] = transform(X[:, j]), transform(T[:, j])
    assert np.array_equal(make().fit(X, y).positive_proba(T), make().fit(X2, y).positive_proba(T2))
