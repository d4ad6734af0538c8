"""Stratified k-fold cross-validation and randomized hyperparameter search."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from joblib import Parallel, delayed

from ..core import InsufficientDataError, ValidationError
from ..evaluation import roc_auc
from ..seeding import derive_int, derive_rng
from .base import check_training_data
from .boosting import GbtHyperparams, NewtonBoostingClassifier


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per row.

    Rows of each class are shuffled separately, the two shuffles are
    concatenated (negatives first) and dealt out round-robin, so fold sizes
    differ by at most one and each fold's class counts are within one of
    the global proportion.
    """
    y = np.asarray(y)
    n = y.size
    if not 2 <= k <= n:
        raise ValidationError(f"k must lie in [2, {n}], got {k}")
    rng = derive_rng(seed, "folds")
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in (0, 1)])
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return folds


@dataclass(frozen=True)
class CVResult:
    fold_scores: tuple
    folds: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))


def _score_fold(X, y, folds, f, trainer, metric):
    test = folds == f
    model = trainer(X[~test], y[~test])
    return metric(model.positive_proba(X[test]), y[test])


def _auc(scores, labels):
    return roc_auc(scores, labels)[1]


def k_fold_cv(X, y, k: int, trainer, seed: int = 0, metric=_auc, n_jobs: int = 1) -> CVResult:
    """Held-out ``metric`` per stratified fold.

    ``trainer(X, y)`` must return a fitted model exposing ``positive_proba``.
    Fold results are gathered in fold order whatever ``n_jobs`` is.
    """
    X, y = check_training_data(X, y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if min(n_pos, n_neg) < k and k != y.size:
        raise InsufficientDataError(
            f"{min(n_pos, n_neg)} samples in the minority class cannot fill {k} folds")
    folds = stratified_folds(y, k, seed)
    if k == y.size:
        # leave-one-out: a single held-out row has no AUC, so pool the scores
        scores = np.empty(y.size)
        for f in range(k):
            test = folds == f
            scores[test] = trainer(X[~test], y[~test]).positive_proba(X[test])
        return CVResult((metric(scores, y),), folds)
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold)(X, y, folds, f, trainer, metric) for f in range(k))
    return CVResult(tuple(float(s) for s in scores), folds)


DEFAULT_SPACE = {
    "colsample_bytree": (0.5, 1.0),
    "gamma": (0.0, 0.3),
    "eta": (0.01, 0.3),
    "max_depth": (2, 6),
    "n_estimators": (50, 200),
    "subsample": (0.5, 1.0),
}

_INT_PARAMS = {"max_depth", "n_estimators"}


def _check_space(space) -> dict:
    if not space:
        raise ValidationError("search space is empty")
    known = {f.name for f in fields(GbtHyperparams)}
    unknown = set(space) - known
    if unknown:
        raise ValidationError(f"unknown hyperparameters in search space: {sorted(unknown)}")
    for name, dom in space.items():
        if isinstance(dom, list):
            if not dom:
                raise ValidationError(f"empty choice list for {name}")
        elif not (isinstance(dom, tuple) and len(dom) == 2 and dom[0] <= dom[1]):
            raise ValidationError(f"{name}: expected (low, high) or a list of choices")
    return space


def sample_candidates(space, n_candidates: int, seed: int = 0) -> list:
    """Draw hyperparameter sets uniformly: ranges are (low, high), lists are choices.

    Integer hyperparameters draw from the inclusive range; anything not in
    ``space`` keeps its default.
    """
    space = _check_space(space)
    rng = derive_rng(seed, "search")
    out = []
    for _ in range(n_candidates):
        values = {}
        for f in fields(GbtHyperparams):
            dom = space.get(f.name)
            if dom is None:
                continue
            if isinstance(dom, list):
                values[f.name] = dom[int(rng.integers(len(dom)))]
            elif f.name in _INT_PARAMS:
                values[f.name] = int(rng.integers(int(dom[0]), int(dom[1]) + 1))
            else:
                values[f.name] = float(rng.uniform(dom[0], dom[1])) if dom[0] < dom[1] else float(dom[0])
        out.append(GbtHyperparams(**values))
    return out


@dataclass(frozen=True)
class SearchResult:
    best: GbtHyperparams
    best_score: float
    table: list  # (GbtHyperparams, mean AUC, fold AUCs) in sampling order


def randomized_search(X, y, space=None, n_candidates: int = 50, k: int = 3, seed: int = 0,
                      n_jobs: int = 1) -> SearchResult:
    """Pick the boosting hyperparameters with the best mean k-fold ROC-AUC.

    All candidates share one fold assignment; ties go to the earliest draw.
    """
    space = DEFAULT_SPACE if space is None else space
    if n_candidates < 1:
        raise ValidationError("n_candidates must be at least 1")
    candidates = sample_candidates(space, n_candidates, seed)
    cv_seed = derive_int(seed, "search-cv")
    table = []
    for hp in candidates:
        def trainer(Xa, ya, hp=hp):
            return NewtonBoostingClassifier.from_hyperparams(hp, random_state=seed).fit(Xa, ya)
        res = k_fold_cv(X, y, k, trainer, cv_seed, n_jobs=n_jobs)
        table.append((hp, res.mean, res.fold_scores))
    best_i = int(np.argmax([row[1] for row in table]))
    return SearchResult(table[best_i][0], table[best_i][1], table)
