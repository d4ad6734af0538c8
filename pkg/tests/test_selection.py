import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonalrad.core import InsufficientDataError, ValidationError
from zonalrad.models import (DEFAULT_SPACE, GbtHyperparams, L1LogisticRegression, k_fold_cv,
                             randomized_search, sample_candidates, stratified_folds)


def data(rng, n=60):
    X = rng.normal(size=(n, 26))
    y = (X[:, 1] + rng.normal(size=n) > 0.6).astype(int)
    return X, y


def logreg(X, y):
    return L1LogisticRegression(lam=0.05).fit(X, y)


class TestFolds:
    def test_leave_one_out(self):
        folds = stratified_folds([0, 1, 0, 1], 4)
        assert sorted(folds.tolist()) == [0, 1, 2, 3]

    def test_seeded(self):
        y = np.r_[np.zeros(30, int), np.ones(12, int)]
        assert np.array_equal(stratified_folds(y, 5, 3), stratified_folds(y, 5, 3))
        assert not np.array_equal(stratified_folds(y, 5, 3), stratified_folds(y, 5, 4))

    @given(st.lists(st.integers(0, 1), min_size=4, max_size=120), st.integers(2, 12),
           st.integers(0, 1000))
    def test_balance(self, labels, k, seed):
        y = np.array(labels)
        k = min(k, y.size)
        folds = stratified_folds(y, k, seed)
        sizes = np.bincount(folds, minlength=k)
        assert sizes.max() - sizes.min() <= 1
        for f in range(k):
            for c in (0, 1):
                expected = np.sum(y == c) * sizes[f] / y.size
                assert abs(np.sum((folds == f) & (y == c)) - expected) <= 1 + 1e-9

    def test_k_range(self):
        with pytest.raises(ValidationError):
            stratified_folds([0, 1, 0], 4)
        with pytest.raises(ValidationError):
            stratified_folds([0, 1, 0], 1)


class TestCrossValidation:
    def test_scores(self, rng):
        X, y = data(rng)
        res = k_fold_cv(X, y, 5, logreg, seed=1)
        assert len(res.fold_scores) == 5
        assert res.mean == np.mean(res.fold_scores)
        assert all(0 <= s <= 1 for s in res.fold_scores)

    def test_deterministic_and_parallel(self, rng):
        X, y = data(rng)
        a = k_fold_cv(X, y, 4, logreg, seed=2)
        b = k_fold_cv(X, y, 4, logreg, seed=2, n_jobs=2)
        assert a.fold_scores == b.fold_scores

    def test_leave_one_out(self, rng):
        X = rng.normal(size=(4, 26))
        res = k_fold_cv(X, [0, 1, 0, 1], 4, logreg)
        assert sorted(res.folds.tolist()) == [0, 1, 2, 3]
        assert len(res.fold_scores) == 1

    def test_too_few_positives(self, rng):
        X = rng.normal(size=(20, 26))
        y = np.r_[np.ones(3, int), np.zeros(17, int)]
        with pytest.raises(InsufficientDataError):
            k_fold_cv(X, y, 5, logreg)


class TestSearch:
    def test_single_point(self, rng):
        X, y = data(rng)
        space = {"eta": (0.1, 0.1), "max_depth": [2], "n_estimators": (5, 5)}
        res = randomized_search(X, y, space, n_candidates=3, k=3)
        assert res.best == GbtHyperparams(eta=0.1, max_depth=2, n_estimators=5)

    def test_argmax_and_repeatability(self, rng):
        X, y = data(rng)
        space = {"eta": (0.05, 0.3), "max_depth": (1, 3), "n_estimators": (5, 20)}
        a = randomized_search(X, y, space, n_candidates=6, k=3, seed=5)
        b = randomized_search(X, y, space, n_candidates=6, k=3, seed=5)
        assert a.table == b.table
        assert all(a.best_score >= row[1] for row in a.table)
        first = next(row for row in a.table if row[1] == a.best_score)
        assert first[0] == a.best

    def test_empty_space(self, rng):
        X, y = data(rng)
        with pytest.raises(ValidationError, match="empty"):
            randomized_search(X, y, {}, n_candidates=2)

    def test_unknown_parameter(self):
        with pytest.raises(ValidationError):
            sample_candidates({"depth": (1, 2)}, 1)

    def test_candidates_in_range(self):
        cands = sample_candidates(DEFAULT_SPACE, 200, seed=0)
        for name, (lo, hi) in DEFAULT_SPACE.items():
            vals = [getattr(c, name) for c in cands]
            assert min(vals) >= lo and max(vals) <= hi
        assert {c.max_depth for c in cands} == {2, 3, 4, 5, 6}
        assert sample_candidates(DEFAULT_SPACE, 5, 1) == sample_candidates(DEFAULT_SPACE, 5, 1)
