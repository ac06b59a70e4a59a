"""Input validation helpers used at public API boundaries."""

import numpy as np

from .errors import InputError


def as_float_array(x, name="array"):
    """Coerce to a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def as_vector(x, name="vector"):
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def as_matrix(x, name="matrix"):
    arr = as_float_array(x, name)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_shape(arr, shape, name="array"):
    if arr.shape != tuple(shape):
        raise InputError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")


def check_positive(value, name="value"):
    if not value > 0:
        raise InputError(f"{name} must be positive, got {value}")


def check_odd(value, name="value"):
    if value % 2 != 1:
        raise InputError(f"{name} must be odd, got {value}")


def check_probability(value, name="value"):
    if not 0.0 < value < 1.0:
        raise InputError(f"{name} must lie in (0, 1), got {value}")
