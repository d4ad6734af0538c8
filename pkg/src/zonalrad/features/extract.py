"""Thirteen features per patch, paired T2W + ADC into the canonical 26-vector."""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from ..core import FeatureVector, Modality, PairedSample
from .firstorder import distribution_stats
from .glcm import compute_glcm, haralick_features, quantize_patch
from .tamura import tamura_features

DEFAULT_LEVELS = {Modality.T2W: 32, Modality.ADC: 16}


def patch_features(pixels, levels: int) -> np.ndarray:
    """The 13 per-patch values in canonical order."""
    x = np.asarray(pixels, dtype=np.float64)
    dist = distribution_stats(x)
    har = haralick_features(compute_glcm(quantize_patch(x, levels), levels))
    tam = tamura_features(x)
    return np.array([*dist, *har, *tam], dtype=np.float64)


def extract_features(sample: PairedSample, t2_levels: int = 32,
                     adc_levels: int = 16) -> FeatureVector:
    values = np.concatenate([patch_features(sample.t2.pixels, t2_levels),
                             patch_features(sample.adc.pixels, adc_levels)])
    return FeatureVector(values, sample.label, sample.zone, sample.sample_id)


def extract_batch(samples, n_jobs: int = 1, t2_levels: int = 32,
                  adc_levels: int = 16) -> list:
    """Extract every sample; output order follows input order for any ``n_jobs``."""
    samples = list(samples)
    if n_jobs == 1 or len(samples) < 2:
        return [extract_features(s, t2_levels, adc_levels) for s in samples]
    chunks = np.array_split(np.arange(len(samples)), min(len(samples), 4 * n_jobs))
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_extract_chunk)([samples[i] for i in chunk], t2_levels, adc_levels)
        for chunk in chunks if len(chunk))
    return [v for part in parts for v in part]


def _extract_chunk(samples, t2_levels, adc_levels):
    return [extract_features(s, t2_levels, adc_levels) for s in samples]


class RadiomicsExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from paired samples to an ``(N, 26)`` matrix."""

    def __init__(self, t2_levels=32, adc_levels=16, n_jobs=1):
        self.t2_levels = t2_levels
        self.adc_levels = adc_levels
        self.n_jobs = n_jobs

    def fit(self, samples, y=None):
        return self

    def transform(self, samples):
        vectors = extract_batch(samples, self.n_jobs, self.t2_levels, self.adc_levels)
        return np.vstack([v.values for v in vectors]) if vectors else np.empty((0, 26))
