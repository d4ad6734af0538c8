"""Second-order (Newton) gradient-boosted trees on the logistic loss."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import ValidationError, Zone
from ..seeding import derive_rng
from ._tree import Tree, grow_newton_tree
from .base import ZoneClassifier


@dataclass(frozen=True)
class GbtHyperparams:
    colsample_bytree: float = 1.0
    gamma: float = 0.0
    eta: float = 0.3
    max_depth: int = 6
    n_estimators: int = 100
    subsample: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "n_estimators", int(self.n_estimators))
        if not 0 < self.colsample_bytree <= 1 or not 0 < self.subsample <= 1:
            raise ValidationError("colsample_bytree and subsample must lie in (0, 1]")
        if not 0 <= self.eta <= 1:
            raise ValidationError("eta must lie in [0, 1]")
        if self.gamma < 0 or self.max_depth < 0 or self.n_estimators < 0:
            raise ValidationError("gamma, max_depth and n_estimators must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


# per-zone values tuned by three-fold randomized search in the original study
ZONE_GBT_DEFAULTS = {
    Zone.PZ: GbtHyperparams(colsample_bytree=0.73, gamma=0.009, eta=0.058, max_depth=4,
                            n_estimators=122, subsample=0.63),
    Zone.TZ: GbtHyperparams(colsample_bytree=0.70, gamma=0.255, eta=0.155, max_depth=2,
                            n_estimators=132, subsample=0.65),
    Zone.AS: GbtHyperparams(colsample_bytree=0.71, gamma=0.013, eta=0.143, max_depth=2,
                            n_estimators=117, subsample=0.99),
}


def zone_defaults(zone) -> GbtHyperparams:
    return ZONE_GBT_DEFAULTS[Zone.parse(zone)]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_loss(y, margin) -> float:
    """Mean logistic loss of raw margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


class NewtonBoostingClassifier(ZoneClassifier):
    """Boosted regression trees fit to logistic gradients and Hessians.

    Each round grows a depth-limited tree on a row subsample and a per-tree
    column subsample, with leaf weights ``-G / (H + reg_lambda)`` shrunk by
    ``eta``.  A split is kept only when its gain exceeds ``gamma``.
    ``train_loss_`` records the training log-loss before the first and after
    every round.
    """

    kind = "gbt"

    def __init__(self, n_estimators=100, eta=0.3, max_depth=6, gamma=0.0, subsample=1.0,
                 colsample_bytree=1.0, reg_lambda=1.0, min_child_weight=1.0, base_score=0.5,
                 random_state=0):
        self.n_estimators = n_estimators
        self.eta = eta
        self.max_depth = max_depth
        self.gamma = gamma
        self.subsample = subsample
        self.colsample_bytree = colsample_bytree
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.base_score = base_score
        self.random_state = random_state

    @classmethod
    def from_hyperparams(cls, hp: GbtHyperparams, **kw) -> "NewtonBoostingClassifier":
        return cls(**hp.to_dict(), **kw)

    @property
    def hyperparams(self) -> GbtHyperparams:
        return GbtHyperparams(self.colsample_bytree, self.gamma, self.eta, self.max_depth,
                              self.n_estimators, self.subsample)

    def _fit(self, X, y):
        self.hyperparams  # validates ranges
        n, d = X.shape
        base = float(np.log(self.base_score / (1.0 - self.base_score)))
        margin = np.full(n, base)
        self.base_margin_ = base
        self.estimators_ = []
        self.train_loss_ = [log_loss(y, margin)]
        n_rows = max(1, int(round(self.subsample * n)))
        n_cols = max(1, int(self.colsample_bytree * d))
        for t in range(int(self.n_estimators)):
            rng = derive_rng(self.random_state, "gbt", t)
            rows = np.sort(rng.permutation(n)[:n_rows]) if n_rows < n else np.arange(n)
            cols = np.sort(rng.permutation(d)[:n_cols]) if n_cols < d else np.arange(d)
            p = _sigmoid(margin)
            g = p - y
            h = p * (1.0 - p)
            tree = grow_newton_tree(X, g, h, rows, cols, int(self.max_depth),
                                    self.reg_lambda, self.gamma, self.min_child_weight)
            tree.value *= self.eta
            margin = margin + tree.predict(X)
            self.estimators_.append(tree)
            self.train_loss_.append(log_loss(y, margin))

    def decision_function(self, X) -> np.ndarray:
        X = self._check_predict(X)
        return self._margin(X)

    def _margin(self, X):
        margin = np.full(X.shape[0], self.base_margin_)
        for tree in self.estimators_:
            margin += tree.predict(X)
        return margin

    def _positive_proba(self, X):
        return _sigmoid(self._margin(X))

    def feature_importances(self) -> np.ndarray:
        """Total split gain per feature, normalized to sum 1."""
        total = np.zeros(self.n_features_in_)
        for tree in self.estimators_:
            split = tree.feature >= 0
            np.add.at(total, tree.feature[split], tree.gain[split])
        s = total.sum()
        return total / s if s > 0 else total

    def _state_arrays(self):
        out = {"n_trees": np.array([len(self.estimators_)]),
               "base_margin": np.array([self.base_margin_]),
               "train_loss": np.array(self.train_loss_)}
        for i, t in enumerate(self.estimators_):
            out.update(t.to_arrays(f"t{i}_"))
        return out

    def _load_state(self, arrays):
        n = int(arrays["n_trees"][0])
        self.base_margin_ = float(arrays["base_margin"][0])
        self.train_loss_ = arrays["train_loss"].tolist()
        self.estimators_ = [Tree.from_arrays(arrays, f"t{i}_") for i in range(n)]


def train_gbt(data, hp: GbtHyperparams | None = None, seed=0) -> NewtonBoostingClassifier:
    if hp is None:
        if data.zone is None:
            raise ValidationError("hyperparameters required when the data has no zone")
        hp = zone_defaults(data.zone)
    model = NewtonBoostingClassifier.from_hyperparams(hp, random_state=seed)
    model.fit(data.X, data.y)
    model.zone_ = data.zone
    return model
