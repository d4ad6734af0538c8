"""Random forest of entropy-split trees with hard-vote probabilities."""

from __future__ import annotations

import math

import numpy as np
from joblib import Parallel, delayed

from ..seeding import derive_rng
from ._tree import Tree, grow_entropy_tree
from .base import ZoneClassifier


def _grow_chunk(X, y, tree_ids, seed, max_features, min_samples_split, bootstrap):
    trees = []
    n = X.shape[0]
    for t in tree_ids:
        rng = derive_rng(seed, "forest", int(t))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_entropy_tree(X, y, idx, max_features, rng, min_samples_split))
    return trees


class EntropyRandomForest(ZoneClassifier):
    """Bagged classification trees split on information gain.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    max_features : "sqrt" or int
        Candidate features per split; "sqrt" means ``ceil(sqrt(n_features))``.
    min_samples_split : int
        Nodes smaller than this become leaves.
    bootstrap : bool
        Draw each tree's rows with replacement (size N).
    random_state : int
        Seed; each tree's stream is derived from (seed, tree index), so the
        result does not depend on ``n_jobs``.
    n_jobs : int
        Worker processes for tree growing.
    """

    kind = "random_forest"
    _require_both_classes = False

    def __init__(self, n_estimators=1000, max_features="sqrt", min_samples_split=2,
                 bootstrap=True, random_state=0, n_jobs=1):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _n_candidates(self, d):
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(d, int(self.max_features)))

    def _fit(self, X, y):
        m = self._n_candidates(X.shape[1])
        ids = np.arange(self.n_estimators)
        args = (self.random_state, m, self.min_samples_split, self.bootstrap)
        if self.n_jobs == 1 or self.n_estimators < 2:
            self.estimators_ = _grow_chunk(X, y, ids, *args)
        else:
            chunks = [c for c in np.array_split(ids, 4 * self.n_jobs) if len(c)]
            parts = Parallel(n_jobs=self.n_jobs)(
                delayed(_grow_chunk)(X, y, c, *args) for c in chunks)
            self.estimators_ = [t for part in parts for t in part]

    def _positive_proba(self, X):
        if not self.estimators_:
            return np.full(X.shape[0], 0.5)
        votes = np.zeros(X.shape[0])
        for tree in self.estimators_:
            votes += tree.predict(X) > 0.5
        return votes / len(self.estimators_)

    def feature_importances(self) -> np.ndarray:
        """Sample-weighted entropy decrease per feature, summed over trees, sum 1."""
        total = np.zeros(self.n_features_in_)
        for tree in self.estimators_:
            split = tree.feature >= 0
            np.add.at(total, tree.feature[split], tree.gain[split] * tree.n_samples[split])
        s = total.sum()
        return total / s if s > 0 else total

    def _state_arrays(self):
        out = {"n_trees": np.array([len(self.estimators_)])}
        for i, t in enumerate(self.estimators_):
            out.update(t.to_arrays(f"t{i}_"))
        return out

    def _load_state(self, arrays):
        n = int(arrays["n_trees"][0])
        self.estimators_ = [Tree.from_arrays(arrays, f"t{i}_") for i in range(n)]


def train_random_forest(data, n_trees=1000, seed=0, n_jobs=1) -> EntropyRandomForest:
    model = EntropyRandomForest(n_estimators=n_trees, random_state=seed, n_jobs=n_jobs)
    model.fit(data.X, data.y)
    model.zone_ = data.zone
    return model
