"""Tamura coarseness, contrast and roughness.

Coarseness uses window means ``A_k`` over ``2^k x 2^k`` neighbourhoods.  For a
pixel (x, y) and scale ``w = 2^k`` the horizontal difference compares the two
adjacent windows covering columns ``[y-w, y)`` and ``[y, y+w)`` (rows
``[x - w//2, x - w//2 + w)``); the vertical difference is the transpose.  A
scale is evaluated at a pixel only when both windows fit, i.e.
``w <= x <= H-w`` and ``w <= y <= W-w``.  The per-pixel best scale maximises
``max(E_h, E_v)`` with ties resolved to the smallest k.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .firstorder import moments

MAX_SCALE = 3
CONTRAST_EXPONENT = 0.25


class TamuraFeatures(NamedTuple):
    coarseness: float
    contrast: float
    roughness: float


def max_scale(shape) -> int:
    """Largest k whose windows fit somewhere in a patch of ``shape``."""
    half = min(shape) // 2
    if half < 1:
        return -1
    return min(MAX_SCALE, int(math.floor(math.log2(half))))


def _window_means(x: np.ndarray, w: int) -> np.ndarray:
    return sliding_window_view(x, (w, w)).mean(axis=(2, 3))


def coarseness(patch) -> float:
    x = np.asarray(patch, dtype=np.float64)
    H, W = x.shape
    kmax = max_scale(x.shape)
    if kmax < 0:
        return 1.0
    rows = np.arange(1, H)[:, None]
    cols = np.arange(1, W)[None, :]
    best = np.full((H - 1, W - 1), -np.inf)
    best_k = np.zeros((H - 1, W - 1), dtype=np.int64)
    for k in range(kmax + 1):
        w = 2 ** k
        hw = w // 2
        valid = (rows >= w) & (rows <= H - w) & (cols >= w) & (cols <= W - w)
        if not valid.any():
            continue
        M = _window_means(x, w)
        r, c = np.nonzero(valid)
        r = r + 1
        c = c + 1
        e_h = np.abs(M[r - hw, c] - M[r - hw, c - w])
        e_v = np.abs(M[r, c - hw] - M[r - w, c - hw])
        e = np.maximum(e_h, e_v)
        better = e > best[r - 1, c - 1]
        best[r[better] - 1, c[better] - 1] = e[better]
        best_k[r[better] - 1, c[better] - 1] = k
    valid_pixels = np.isfinite(best)
    if not valid_pixels.any():
        return 1.0
    return float(np.mean(2.0 ** best_k[valid_pixels]))


def tamura_contrast(patch) -> float:
    """``sigma / alpha4**0.25``; zero for a constant patch."""
    m = moments(patch)
    if m.std == 0:
        return 0.0
    return m.std / m.alpha4 ** CONTRAST_EXPONENT


def tamura_features(patch) -> TamuraFeatures:
    c = coarseness(patch)
    t = tamura_contrast(patch)
    return TamuraFeatures(c, t, c + t)
