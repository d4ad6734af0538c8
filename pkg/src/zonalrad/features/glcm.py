"""Gray-level co-occurrence matrix at offset (0, +1) and six Haralick statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core import ValidationError


def quantize_patch(patch, levels: int = 32) -> np.ndarray:
    """Min-max bin a patch into ``{0..levels-1}``; a constant patch maps to zeros."""
    if levels < 2:
        raise ValidationError("levels must be >= 2")
    x = np.asarray(patch, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(x.shape, dtype=np.int64)
    q = np.floor((x - lo) / (hi - lo) * levels).astype(np.int64)
    return np.minimum(q, levels - 1)


@dataclass(frozen=True, eq=False)
class GlcmMatrix:
    p: np.ndarray
    levels: int
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float

    @property
    def px(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @property
    def py(self) -> np.ndarray:
        return self.p.sum(axis=0)


def compute_glcm(grid, levels: int) -> GlcmMatrix:
    """Normalized co-occurrence of horizontally adjacent pairs (x[r,c], x[r,c+1]).

    The matrix is not symmetrized; only the 0-degree, distance-1 direction
    is counted.
    """
    g = np.asarray(grid, dtype=np.int64)
    if g.ndim != 2 or g.shape[1] < 2:
        raise ValidationError("GLCM needs a 2-D grid at least two columns wide")
    if g.min() < 0 or g.max() >= levels:
        raise ValidationError("grid values outside 0..levels-1")
    left = g[:, :-1].ravel()
    right = g[:, 1:].ravel()
    counts = np.bincount(left * levels + right, minlength=levels * levels)
    p = counts.reshape(levels, levels) / left.size
    idx = np.arange(levels, dtype=np.float64)
    px, py = p.sum(axis=1), p.sum(axis=0)
    mu_x = float(idx @ px)
    mu_y = float(idx @ py)
    sigma_x = float(np.sqrt(((idx - mu_x) ** 2) @ px))
    sigma_y = float(np.sqrt(((idx - mu_y) ** 2) @ py))
    return GlcmMatrix(p, levels, mu_x, mu_y, sigma_x, sigma_y)


class HaralickFeatures(NamedTuple):
    asm: float
    contrast: float
    correlation: float
    dissimilarity: float
    energy: float
    homogeneity: float


def haralick_features(glcm: GlcmMatrix) -> HaralickFeatures:
    p = glcm.p
    i, j = np.indices(p.shape, dtype=np.float64)
    diff = i - j
    # asm is rebuilt from energy so that energy**2 == asm and sqrt(asm) == energy hold bit-exactly
    energy = float(np.sqrt(np.sum(p * p)))
    asm = energy * energy
    contrast = float(np.sum(diff * diff * p))
    dissimilarity = float(np.sum(np.abs(diff) * p))
    # inverse difference moment
    homogeneity = float(np.sum(p / (1.0 + diff * diff)))
    denom = glcm.sigma_x * glcm.sigma_y
    if denom == 0:
        correlation = 1.0
    else:
        correlation = float((np.sum(i * j * p) - glcm.mu_x * glcm.mu_y) / denom)
    return HaralickFeatures(asm, contrast, correlation, dissimilarity, energy, homogeneity)
