"""Seeded synthetic T2W/ADC cases with zone masks and hypointense lesions.

Tissue is smooth correlated noise per zone (mean, sigma, correlation length)
plus a low-frequency heterogeneity field.  Lesions are flat-topped discs with
Gaussian edges that lower the local intensity by ``lesion_contrast`` tissue
standard deviations in both modalities.  T2W images get a random per-case
gain and offset to mimic scanner-dependent intensity ranges; ADC keeps its
physical scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, gaussian_filter

from .core import ValidationError, Zone
from .sampler import CaseImage, Finding, window_fits
from .seeding import derive_rng

DEFAULT_TRAIN_COUNTS = {Zone.PZ: 188, Zone.TZ: 82, Zone.AS: 55}
DEFAULT_TEST_COUNTS = {Zone.PZ: 113, Zone.TZ: 59, Zone.AS: 34}


@dataclass(frozen=True)
class TissueParams:
    t2_mean: float
    t2_sigma: float
    adc_mean: float
    adc_sigma: float
    heterogeneity: float


DEFAULT_TISSUE = {
    Zone.PZ: TissueParams(t2_mean=420.0, t2_sigma=30.0, adc_mean=1600.0, adc_sigma=110.0,
                          heterogeneity=0.25),
    Zone.TZ: TissueParams(t2_mean=300.0, t2_sigma=30.0, adc_mean=1250.0, adc_sigma=110.0,
                          heterogeneity=0.9),
    Zone.AS: TissueParams(t2_mean=200.0, t2_sigma=25.0, adc_mean=1050.0, adc_sigma=100.0,
                          heterogeneity=0.5),
}
# periprostatic fat: bright on T2W, so gland-edge patches never mimic a hypointense lesion
OUTSIDE = TissueParams(t2_mean=520.0, t2_sigma=25.0, adc_mean=1700.0, adc_sigma=120.0,
                       heterogeneity=0.5)


@dataclass(frozen=True)
class PhantomConfig:
    t2_size: tuple = (128, 128)
    adc_size: tuple = (48, 48)
    # gland / transition-zone ellipses as (center_row, center_col, radius_row, radius_col),
    # in units of the T2W grid; anterior stroma is the gland rim above ``as_boundary_row``
    gland: tuple = (64.0, 64.0, 46.0, 54.0)
    transition: tuple = (68.0, 64.0, 20.0, 28.0)
    as_boundary_row: float = 40.0
    lesion_contrast: float = 1.0
    lesion_radius: float = 5.0
    lesion_edge: float = 1.5
    correlation_length: float = 1.2
    heterogeneity_length: float = 6.0
    tissue: dict = field(default_factory=lambda: dict(DEFAULT_TISSUE))
    counts: dict = field(default_factory=lambda: dict(DEFAULT_TRAIN_COUNTS))
    extra_cases: int = 40
    t2_gain_range: tuple = (0.7, 1.4)
    t2_offset_range: tuple = (-60.0, 60.0)
    seed: int = 0

    def __post_init__(self):
        if self.lesion_contrast < 0:
            raise ValidationError("lesion contrast must be >= 0")
        counts = {Zone.parse(z): int(n) for z, n in self.counts.items()}
        if any(n < 0 for n in counts.values()):
            raise ValidationError("finding counts must be >= 0")
        tissue = {Zone.parse(z): t if isinstance(t, TissueParams) else TissueParams(**t)
                  for z, t in self.tissue.items()}
        if tissue[Zone.TZ].heterogeneity <= tissue[Zone.PZ].heterogeneity:
            raise ValidationError("TZ heterogeneity must exceed PZ heterogeneity")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "tissue", tissue)

    @property
    def n_cases(self) -> int:
        return max(self.counts.values(), default=0) + self.extra_cases


def zone_masks(shape, config: PhantomConfig) -> dict:
    """Zone masks evaluated at pixel centers of a grid of ``shape``."""
    sr = config.t2_size[0] / shape[0]
    sc = config.t2_size[1] / shape[1]
    r = (np.arange(shape[0]) + 0.5) * sr - 0.5
    c = (np.arange(shape[1]) + 0.5) * sc - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")

    def ellipse(spec):
        r0, c0, ar, ac = spec
        return ((rr - r0) / ar) ** 2 + ((cc - c0) / ac) ** 2 <= 1.0

    gland = ellipse(config.gland)
    tz = ellipse(config.transition) & gland
    rim = gland & ~tz
    anterior = rim & (rr < config.as_boundary_row)
    return {Zone.PZ: rim & ~anterior, Zone.TZ: tz, Zone.AS: anterior}


def _field(rng, shape, length) -> np.ndarray:
    noise = gaussian_filter(rng.standard_normal(shape), length, mode="reflect")
    return (noise - noise.mean()) / noise.std()


def _tissue_image(rng, shape, masks, config: PhantomConfig, modality: str, scale: float):
    texture = _field(rng, shape, max(config.correlation_length * scale, 0.5))
    lowfreq = _field(rng, shape, max(config.heterogeneity_length * scale, 1.0))
    mean = np.empty(shape)
    sigma = np.empty(shape)
    het = np.empty(shape)
    regions = [(~np.any(np.stack(list(masks.values())), axis=0), OUTSIDE)]
    regions += [(masks[z], config.tissue[z]) for z in masks]
    for region, params in regions:
        mean[region] = getattr(params, f"{modality}_mean")
        sigma[region] = getattr(params, f"{modality}_sigma")
        het[region] = params.heterogeneity
    # soften zone boundaries a little so patches straddling them are not step functions
    mean = gaussian_filter(mean, 1.0 * scale, mode="nearest")
    # both fields have unit variance, so this is the background standard deviation
    background_std = sigma * np.sqrt(1.0 + het * het)
    return mean + sigma * (texture + het * lowfreq), background_std


def _lesion_profile(shape, center, radius, edge) -> np.ndarray:
    rr, cc = np.indices(shape, dtype=np.float64)
    d = np.hypot(rr - center[0], cc - center[1])
    return np.where(d <= radius, 1.0, np.exp(-0.5 * ((d - radius) / edge) ** 2))


def _lesion_sites(mask, config: PhantomConfig) -> np.ndarray:
    r = int(np.ceil(config.lesion_radius))
    structure = np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
    core = binary_erosion(mask, structure=structure)
    rows, cols = np.nonzero(core)
    h, w = config.adc_size
    ok = []
    for row, col in zip(rows, cols):
        adc = _to_adc((row, col), config)
        ok.append(window_fits(config.t2_size, (row, col), 16) and window_fits((h, w), adc, 6))
    return np.stack([rows, cols], axis=1)[np.array(ok, dtype=bool)] if len(rows) else \
        np.empty((0, 2), dtype=np.int64)


def _to_adc(center, config: PhantomConfig) -> tuple:
    sr = config.adc_size[0] / config.t2_size[0]
    sc = config.adc_size[1] / config.t2_size[1]
    return (int(np.floor((center[0] + 0.5) * sr)), int(np.floor((center[1] + 0.5) * sc)))


def generate_corpus(config: PhantomConfig | None = None, split: str = "train") -> list:
    """Deterministic list of :class:`CaseImage` for ``config``."""
    config = config or PhantomConfig()
    t2_masks = zone_masks(config.t2_size, config)
    adc_masks = zone_masks(config.adc_size, config)
    sites = {z: _lesion_sites(t2_masks[z], config) for z in Zone}
    for z, n in config.counts.items():
        if n > 0 and len(sites[z]) == 0:
            raise ValidationError(f"lesion of radius {config.lesion_radius} does not fit in {z.value}")

    n_cases = config.n_cases
    assign_rng = derive_rng(config.seed, "phantom", split, "assign")
    lesion_cases = {z: set(assign_rng.choice(n_cases, size=config.counts.get(z, 0), replace=False)
                           .tolist()) for z in Zone}
    scale = config.adc_size[0] / config.t2_size[0]
    cases = []
    for i in range(n_cases):
        case_id = f"{split}{i:04d}"
        rng = derive_rng(config.seed, "phantom", split, case_id)
        t2, t2_sigma = _tissue_image(rng, config.t2_size, t2_masks, config, "t2", 1.0)
        adc, adc_sigma = _tissue_image(rng, config.adc_size, adc_masks, config, "adc", scale)
        findings = []
        for z in Zone:
            if i not in lesion_cases[z]:
                continue
            row, col = sites[z][rng.integers(len(sites[z]))]
            t2_c = (int(row), int(col))
            adc_c = _to_adc(t2_c, config)
            findings.append(Finding(z, t2_c, adc_c))
            # lesion profile in ADC pixel units uses the same physical radius
            adc_center = ((t2_c[0] + 0.5) * scale - 0.5, (t2_c[1] + 0.5) * scale - 0.5)
            t2 -= config.lesion_contrast * t2_sigma * _lesion_profile(
                config.t2_size, t2_c, config.lesion_radius, config.lesion_edge)
            adc -= config.lesion_contrast * adc_sigma * _lesion_profile(
                config.adc_size, adc_center, config.lesion_radius * scale,
                config.lesion_edge * scale)
        gain = rng.uniform(*config.t2_gain_range)
        offset = rng.uniform(*config.t2_offset_range)
        cases.append(CaseImage(case_id, t2 * gain + offset, adc, t2_masks, tuple(findings)))
    return cases
