"""Zone-stratified lesion classification from paired T2W / ADC patches."""

from .core import (FEATURE_NAMES, N_FEATURES, FeatureVector, Modality, PairedSample, Patch,
                   SchemaError, ValidationError, Zone, ZonalError, ZoneDataset)

__version__ = "0.1.0"

__all__ = [
    "FEATURE_NAMES", "N_FEATURES", "FeatureVector", "Modality", "PairedSample", "Patch",
    "SchemaError", "ValidationError", "Zone", "ZonalError", "ZoneDataset", "__version__",
]
