from .extract import RadiomicsExtractor, extract_batch, extract_features, patch_features
from .firstorder import DistributionStats, MomentSummary, distribution_stats, moments
from .glcm import GlcmMatrix, HaralickFeatures, compute_glcm, haralick_features, quantize_patch
from .tamura import TamuraFeatures, coarseness, tamura_contrast, tamura_features

__all__ = [
    "RadiomicsExtractor", "extract_batch", "extract_features", "patch_features",
    "DistributionStats", "MomentSummary", "distribution_stats", "moments",
    "GlcmMatrix", "HaralickFeatures", "compute_glcm", "haralick_features", "quantize_patch",
    "TamuraFeatures", "coarseness", "tamura_contrast", "tamura_features",
]
