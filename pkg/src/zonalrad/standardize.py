"""Landmark-based intensity standardization (piecewise-linear histogram mapping).

Training maps each image's cut-off percentile range linearly onto a fixed
standard scale and averages the mapped landmark percentiles.  Applying the
model builds one linear segment per pair of adjacent landmarks so that the
image's own landmarks land on the learned means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import Modality, ValidationError

CLAMP_MARGIN = 0.1


@dataclass(frozen=True)
class StandardizationConfig:
    cutoff_low: float = 1.0
    cutoff_high: float = 99.0
    landmarks: tuple = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)
    s_min: float = 0.0
    s_max: float = 4095.0

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(float(p) for p in self.landmarks))
        lm = np.asarray(self.landmarks)
        if lm.size == 0 or np.any(np.diff(lm) <= 0):
            raise ValidationError("landmark percentiles must be strictly increasing")
        if not (0 <= self.cutoff_low < lm[0] and lm[-1] < self.cutoff_high <= 100):
            raise ValidationError("cut-off percentiles must enclose every landmark")
        if not self.s_min < self.s_max:
            raise ValidationError("standard scale needs s_min < s_max")

    @property
    def knot_percentiles(self) -> np.ndarray:
        return np.array([self.cutoff_low, *self.landmarks, self.cutoff_high])

    def to_dict(self) -> dict:
        return {"cutoff_low": self.cutoff_low, "cutoff_high": self.cutoff_high,
                "landmarks": list(self.landmarks), "s_min": self.s_min, "s_max": self.s_max}


@dataclass(frozen=True)
class StandardizationModel:
    config: StandardizationConfig
    mean_landmarks: np.ndarray = field(repr=False)

    def __post_init__(self):
        ml = np.array(self.mean_landmarks, dtype=np.float64)
        if ml.shape != (len(self.config.landmarks),):
            raise ValidationError("model/config mismatch: wrong number of landmarks")
        ml.setflags(write=False)
        object.__setattr__(self, "mean_landmarks", ml)


def percentile(values, q) -> np.ndarray:
    """Linear-interpolation percentile with index ``q/100 * (n - 1)``."""
    return np.percentile(np.asarray(values, dtype=np.float64).ravel(), q, method="linear")


def _image_knots(image, config: StandardizationConfig) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.size < 2 or not np.all(np.isfinite(arr)):
        raise ValidationError("image must hold at least two finite intensities")
    knots = percentile(arr, config.knot_percentiles)
    if knots[-1] <= knots[0]:
        raise ValidationError("degenerate image: cut-off percentiles coincide")
    return knots


def fit_standardizer(images, config: StandardizationConfig | None = None) -> StandardizationModel:
    config = config or StandardizationConfig()
    images = list(images)
    if not images:
        raise ValidationError("empty corpus")
    mapped = np.empty((len(images), len(config.landmarks)))
    for i, image in enumerate(images):
        knots = _image_knots(image, config)
        low, high = knots[0], knots[-1]
        scale = (config.s_max - config.s_min) / (high - low)
        mapped[i] = config.s_min + (knots[1:-1] - low) * scale
    # mean of non-decreasing rows is non-decreasing; clip guards float drift at the ends
    means = np.clip(mapped.mean(axis=0), config.s_min, config.s_max)
    return StandardizationModel(config, np.maximum.accumulate(means))


def piecewise_linear(values, knots, targets) -> np.ndarray:
    """Monotone piecewise-linear map through (knots, targets), linear extrapolation."""
    x = np.asarray(values, dtype=np.float64)
    knots = np.asarray(knots, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    last = len(knots) - 2
    seg = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, last)
    x0, x1 = knots[seg], knots[seg + 1]
    y0, y1 = targets[seg], targets[seg + 1]
    width = x1 - x0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = y0 + (x - x0) * (y1 - y0) / width
    # zero-width segment (tied knots) only arises when x sits on its right end
    return np.where(width > 0, out, y1)


def apply_standardizer(model: StandardizationModel, image, modality=Modality.T2W) -> np.ndarray:
    """Map ``image`` onto the standard scale; only T2W images may be standardized."""
    if Modality(modality) is not Modality.T2W:
        raise ValidationError("only T2W images are standardized; ADC values are quantitative")
    config = model.config
    knots = _image_knots(image, config)
    targets = np.array([config.s_min, *model.mean_landmarks, config.s_max])
    out = piecewise_linear(np.asarray(image, dtype=np.float64), knots, targets)
    margin = CLAMP_MARGIN * (config.s_max - config.s_min)
    return np.clip(out, config.s_min - margin, config.s_max + margin)


class IntensityStandardizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a list of T2W images, ``transform`` a list."""

    def __init__(self, cutoff_low=1.0, cutoff_high=99.0,
                 landmarks=(10, 20, 30, 40, 50, 60, 70, 80, 90), s_min=0.0, s_max=4095.0):
        self.cutoff_low = cutoff_low
        self.cutoff_high = cutoff_high
        self.landmarks = landmarks
        self.s_min = s_min
        self.s_max = s_max

    def _config(self) -> StandardizationConfig:
        return StandardizationConfig(self.cutoff_low, self.cutoff_high, tuple(self.landmarks),
                                     self.s_min, self.s_max)

    def fit(self, images, y=None):
        self.model_ = fit_standardizer(images, self._config())
        self.mean_landmarks_ = self.model_.mean_landmarks
        return self

    def transform(self, images):
        check_is_fitted(self, "model_")
        return [apply_standardizer(self.model_, im) for im in images]

    @classmethod
    def from_model(cls, model: StandardizationModel) -> "IntensityStandardizer":
        c = model.config
        est = cls(c.cutoff_low, c.cutoff_high, c.landmarks, c.s_min, c.s_max)
        est.model_ = model
        est.mean_landmarks_ = model.mean_landmarks
        return est
