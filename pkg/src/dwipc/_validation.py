"""Input validation helpers shared by the core ops and the estimator classes."""

from __future__ import annotations

import numpy as np

from .errors import DimsMismatchError, InvalidDataError


def ensure_finite(arr, name="array", exc=InvalidDataError):
    """Raise if ``arr`` contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise exc(f"{name} contains non-finite values")


def ensure_same_dims(dims_a, dims_b, what="volumes"):
    if tuple(dims_a) != tuple(dims_b):
        raise DimsMismatchError(f"{what} have mismatched dims: {tuple(dims_a)} vs {tuple(dims_b)}")


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")


def check_at_least(value, minimum, name):
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value!r}")


def as_float_array(x, name="array"):
    """Convert to a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    ensure_finite(arr, name, exc=ValueError)
    return arr
