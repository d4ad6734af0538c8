"""First- and third-order intensity statistics of a patch."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class DistributionStats(NamedTuple):
    p10: float
    mean: float
    skewness: float
    kurtosis: float


class MomentSummary(NamedTuple):
    mean: float
    std: float
    mu4: float
    alpha4: float


def _scaled_deviations(x):
    """Deviations from the mean divided by a power of two near their largest magnitude.

    The scaling is exact, so moment ratios are unchanged, but tiny spreads no
    longer underflow when raised to the fourth power.
    """
    mu = x.mean()
    d = x - mu
    peak = np.max(np.abs(d))
    e = int(np.frexp(peak)[1]) if peak > 0 else 0
    return mu, np.ldexp(d, -e), e


def moments(values) -> MomentSummary:
    """Population mean, std, fourth central moment and ``mu4 / std**4``."""
    x = np.asarray(values, dtype=np.float64).ravel()
    mu, z, e = _scaled_deviations(x)
    var = np.mean(z * z)
    mu4 = np.mean(z ** 4)
    std = float(np.ldexp(np.sqrt(var), e))
    alpha4 = float(mu4 / var ** 2) if var > 0 else 0.0
    return MomentSummary(float(mu), std, float(np.ldexp(mu4, 4 * e)), alpha4)


def distribution_stats(patch) -> DistributionStats:
    """10th percentile, mean, skewness and excess kurtosis.

    Moments are population (divide-by-n).  A constant patch has skewness
    and kurtosis 0 by convention.
    """
    x = np.asarray(patch, dtype=np.float64).ravel()
    p10 = float(np.percentile(x, 10.0, method="linear"))
    mu, z, _ = _scaled_deviations(x)
    m2 = np.mean(z * z)
    if m2 == 0:
        return DistributionStats(p10, float(mu), 0.0, 0.0)
    m3 = np.mean(z ** 3)
    m4 = np.mean(z ** 4)
    skew = m3 / m2 ** 1.5
    kurt = m4 / (m2 * m2) - 3.0
    return DistributionStats(p10, float(mu), float(skew), float(kurt))
