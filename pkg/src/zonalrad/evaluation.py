"""ROC / precision-recall curves, F1 and per-zone report assembly."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import ValidationError, Zone


class Curve(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray


class F1Result(NamedTuple):
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.size == 0 or s.size != y.size:
        raise ValidationError("scores and labels must be non-empty and equally long")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    return s, y.astype(np.int64)


def _cumulative_counts(s, y):
    """True/false positive counts at each distinct threshold, highest first."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    return tps, fps, s[last]


def roc_curve(scores, labels) -> Curve:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC needs both classes")
    tps, fps, thr = _cumulative_counts(s, y)
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return Curve(fpr, tpr, np.r_[np.inf, thr])


def roc_auc(scores, labels):
    """Trapezoidal ROC area with tied scores grouped into one threshold.

    Returns ``(curve, auc)``; the area equals the probability that a random
    positive outscores a random negative, ties counting one half.
    """
    curve = roc_curve(scores, labels)
    auc = float(np.sum(np.diff(curve.x) * (curve.y[1:] + curve.y[:-1]) / 2.0))
    return curve, auc


def pr_curve(scores, labels) -> Curve:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValidationError("precision-recall needs at least one positive")
    tps, fps, thr = _cumulative_counts(s, y)
    precision = tps / (tps + fps)
    recall = tps / n_pos
    return Curve(np.r_[0.0, recall], np.r_[1.0, precision], np.r_[np.inf, thr])


def pr_auc(scores, labels):
    """Average precision ``sum_k (R_k - R_{k-1}) P_k``; returns ``(curve, area)``."""
    curve = pr_curve(scores, labels)
    area = float(np.sum(np.diff(curve.x) * curve.y[1:]))
    return curve, area


def f1_at(scores, labels, threshold: float = 0.5) -> F1Result:
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return F1Result(precision, recall, f1, tp, fp, tn, fn)


# --- reports ---------------------------------------------------------------

@dataclass
class ZoneReport:
    zone: Zone
    rows: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    importances: dict = field(default_factory=dict)

    COLUMNS = ("zone", "model", "roc_auc", "pr_auc", "f1", "precision", "recall",
               "tp", "fp", "tn", "fn")

    def add(self, kind: str, scores, labels, threshold=0.5, importance=None):
        roc, auc = roc_auc(scores, labels)
        pr, ap = pr_auc(scores, labels)
        f = f1_at(scores, labels, threshold)
        self.rows.append({"zone": self.zone.value, "model": kind, "roc_auc": auc, "pr_auc": ap,
                          "f1": f.f1, "precision": f.precision, "recall": f.recall,
                          "tp": f.tp, "fp": f.fp, "tn": f.tn, "fn": f.fn})
        self.curves[kind] = {"roc": roc, "pr": pr}
        if importance is not None:
            self.importances[kind] = importance

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, self.COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    def to_dict(self) -> dict:
        return {"zone": self.zone.value, "rows": self.rows,
                "importances": {k: [{"rank": r, "feature": n, "importance": v}
                                    for r, n, v in rep.rows()]
                                for k, rep in self.importances.items()}}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def export_curves(self, directory) -> list:
        """One CSV per (model, curve) with columns x, y, threshold."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for kind, pair in self.curves.items():
            for name, curve in pair.items():
                path = out / f"{self.zone.value}_{kind}_{name}.csv"
                write_curve(path, curve)
                written.append(path)
        return written

    def write_importances(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zone", "model", "rank", "feature", "importance"])
            for kind, rep in self.importances.items():
                for rank, name, value in rep.rows():
                    w.writerow([self.zone.value, kind, rank, name, repr(value)])


def write_curve(path, curve: Curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "threshold"])
        for x, y, t in zip(curve.x, curve.y, curve.thresholds):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(t))])


def read_curve(path) -> Curve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    arr = np.array([[float(r["x"]), float(r["y"]), float(r["threshold"])] for r in rows])
    return Curve(arr[:, 0], arr[:, 1], arr[:, 2])


def roc_area_from_curve(curve: Curve) -> float:
    return float(np.sum(np.diff(curve.x) * (curve.y[1:] + curve.y[:-1]) / 2.0))


def pr_area_from_curve(curve: Curve) -> float:
    return float(np.sum(np.diff(curve.x) * curve.y[1:]))


def zone_report(models, table, zone, threshold: float = 0.5, extra_scores=None) -> ZoneReport:
    """Score every model on ``table`` and collect metrics, curves and importances.

    ``extra_scores`` maps a model name to precomputed scores (e.g. the
    network, which consumes patches instead of feature rows).
    """
    zone = Zone.parse(zone)
    if any(z != zone for z in table.zones):
        raise ValidationError(f"feature table holds rows from zones other than {zone.value}")
    report = ZoneReport(zone)
    for model in models:
        model_zone = getattr(model, "zone_", None)
        if model_zone is not None and Zone.parse(model_zone) != zone:
            raise ValidationError(
                f"{model.kind} model was trained for {Zone.parse(model_zone).value}, not {zone.value}")
        importance = None
        if model.kind != "svm_rbf":
            from .models.base import feature_importances
            importance = feature_importances(model)
        report.add(model.kind, model.positive_proba(table.X), table.y, threshold, importance)
    for name, scores in (extra_scores or {}).items():
        report.add(name, scores, table.y, threshold)
    return report
