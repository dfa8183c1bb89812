"""Input validation helpers shared by the estimators and the functional core."""

import numbers

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when an input is well formed but carries no usable signal."""


def check_image(img, name="image", min_size=1):
    """Return ``img`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (height, width), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.size < min_size:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_pair(left, right):
    left = check_image(left, "left")
    right = check_image(right, "right")
    if left.shape != right.shape:
        raise ValueError(f"left/right shape mismatch: {left.shape} vs {right.shape}")
    return left, right


def check_volume(vol, name="volume"):
    arr = np.asarray(vol, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"{name} must be a non-empty (height, width, ndisp) array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_d_max(d_max):
    if not isinstance(d_max, numbers.Integral) or isinstance(d_max, bool) or d_max < 0:
        raise ValueError(f"d_max must be a non-negative integer, got {d_max!r}")
    return int(d_max)


def check_radius(radius):
    if not isinstance(radius, numbers.Integral) or isinstance(radius, bool) or radius < 0:
        raise ValueError(f"window radius must be a non-negative integer, got {radius!r}")
    return int(radius)


def check_unit_interval(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
