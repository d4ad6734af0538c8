"""Shared estimator plumbing: input validation, the probability contract, importances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..core import FEATURE_NAMES, N_FEATURES, SchemaError, ValidationError, Zone


@dataclass
class TrainMatrix:
    X: np.ndarray
    y: np.ndarray
    zone: Zone | None = None

    def __post_init__(self):
        self.X, self.y = check_training_data(self.X, self.y, require_both_classes=False)
        if self.zone is not None:
            self.zone = Zone.parse(self.zone)

    @classmethod
    def from_table(cls, table, zone=None) -> "TrainMatrix":
        return cls(table.X, table.y, zone)


def check_rows(X, n_features: int | None = None) -> np.ndarray:
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, ensure_min_samples=1)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if n_features is not None and X.shape[1] != n_features:
        raise SchemaError(f"expected {n_features} feature columns, got {X.shape[1]}")
    return X


def check_training_data(X, y, require_both_classes: bool = True):
    X = check_rows(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError(f"y must be 1-D with {X.shape[0]} entries")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if require_both_classes and (X.shape[0] < 2 or y.min() == y.max()):
        raise ValidationError("training needs at least two rows and both classes")
    return X, y


class ZoneClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier with the common scoring contract.

    Subclasses implement ``_fit`` and ``_positive_proba``; every model maps
    a finite row to a probability in [0, 1].
    """

    kind = "base"
    _require_both_classes = True

    def fit(self, X, y):
        X, y = check_training_data(X, y, self._require_both_classes)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        self._fit(X, y)
        return self

    def _check_predict(self, X):
        check_is_fitted(self, "n_features_in_")
        return check_rows(X, self.n_features_in_)

    def positive_proba(self, X) -> np.ndarray:
        p = self._positive_proba(self._check_predict(X))
        return np.clip(p, 0.0, 1.0)

    def predict_proba(self, X) -> np.ndarray:
        p = self.positive_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.positive_proba(X) >= 0.5).astype(np.int64)

    def feature_importances(self) -> np.ndarray:
        raise ValidationError(f"feature importances are not available for {self.kind}")

    # persistence hooks: plain arrays plus JSON-able scalars
    def _state_arrays(self) -> dict:
        raise NotImplementedError

    def _load_state(self, arrays: dict) -> None:
        raise NotImplementedError


@dataclass(frozen=True)
class ImportanceReport:
    values: np.ndarray
    names: tuple

    @property
    def ranking(self) -> list:
        """Feature indices from most to least important (stable on ties)."""
        return [int(i) for i in np.argsort(-self.values, kind="stable")]

    def rows(self) -> list:
        return [(rank + 1, self.names[i], float(self.values[i]))
                for rank, i in enumerate(self.ranking)]


def feature_importances(model) -> ImportanceReport:
    values = np.asarray(model.feature_importances(), dtype=np.float64)
    names = FEATURE_NAMES if values.size == N_FEATURES else tuple(
        f"f{i}" for i in range(values.size))
    return ImportanceReport(values, names)


def predict_proba(model, rows) -> np.ndarray:
    """Positive-class probability for each row."""
    return model.positive_proba(rows)
