"""Shallow classifiers sharing one train/score contract."""

from .base import ImportanceReport, TrainMatrix, ZoneClassifier, feature_importances, predict_proba
from .boosting import ZONE_GBT_DEFAULTS, GbtHyperparams, NewtonBoostingClassifier, train_gbt, zone_defaults
from .forest import EntropyRandomForest, train_random_forest
from .logistic import L1LogisticRegression, train_logreg_l1
from .selection import (DEFAULT_SPACE, CVResult, SearchResult, k_fold_cv, randomized_search,
                        sample_candidates, stratified_folds)
from .svm import RBFSupportVectorClassifier, train_svm_rbf

MODEL_KINDS = {
    "logreg_l1": L1LogisticRegression,
    "svm_rbf": RBFSupportVectorClassifier,
    "random_forest": EntropyRandomForest,
    "gbt": NewtonBoostingClassifier,
}

__all__ = [
    "CVResult", "DEFAULT_SPACE", "EntropyRandomForest", "GbtHyperparams", "ImportanceReport",
    "L1LogisticRegression", "MODEL_KINDS", "NewtonBoostingClassifier", "RBFSupportVectorClassifier",
    "SearchResult", "ZONE_GBT_DEFAULTS", "TrainMatrix", "ZoneClassifier", "feature_importances", "k_fold_cv",
    "predict_proba", "randomized_search", "sample_candidates", "stratified_folds", "train_gbt",
    "train_logreg_l1", "train_random_forest", "train_svm_rbf", "zone_defaults",
]
