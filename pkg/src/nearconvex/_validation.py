from __future__ import annotations

import numpy as np
from sklearn.utils import check_array, check_consistent_length

from .dataset import WeightedPointSet


def to_point_set(X, y=None, sample_weight=None) -> WeightedPointSet:
    """Validate sklearn-style inputs and wrap them as a point set."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        check_consistent_length(X, y)
    if sample_weight is not None:
        sample_weight = np.asarray(sample_weight, dtype=float).ravel()
        check_consistent_length(X, sample_weight)
    return WeightedPointSet(X, sample_weight, y)
