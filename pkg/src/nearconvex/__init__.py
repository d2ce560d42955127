"""Coresets for near-convex losses via f-SVD sensitivity sampling."""
from .dataset import (DataError, WeightedPointSet, load_csv, normalize_max_norm, save_csv,
                      standardize)
from .estimators import FSVDTransformer, SensitivitySampler, StreamingCoreset
from .fsvd import FSvd, GSpec, fsvd, fsvd_general, fsvd_quadratic, verify_sandwich
from .losses import SolverConfig, make_loss, minimize
from .sampler import Coreset, sample_coreset, sample_size, uniform_coreset
from .sensitivity import SensitivityProfile, sensitivities
from .streaming import StreamState

__version__ = "0.1.0"

__all__ = [
    "Coreset", "DataError", "FSVDTransformer", "FSvd", "GSpec", "SensitivityProfile",
    "SensitivitySampler", "SolverConfig", "StreamState", "StreamingCoreset",
    "WeightedPointSet", "fsvd", "fsvd_general", "fsvd_quadratic", "load_csv", "make_loss",
    "minimize", "normalize_max_norm", "sample_coreset", "sample_size", "save_csv",
    "sensitivities", "standardize", "uniform_coreset", "verify_sandwich",
]
