"""Input validation helpers shared across the package."""

import numpy as np


def check_mask(mask, shape=None, *, allow_empty=False):
    """Return ``mask`` as a 2-D boolean array, validating its shape.

    Parameters
    ----------
    mask : array-like of bool, shape (height, width)
    shape : tuple of int, optional
        Expected ``(height, width)``.
    allow_empty : bool
        When False a mask with no foreground pixel raises ``DegenerateMaskError``.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool:
        mask = mask.astype(bool)
    if shape is not None and tuple(mask.shape) != tuple(shape):
        raise ValueError(f"mask shape {mask.shape} does not match {tuple(shape)}")
    if not allow_empty and not mask.any():
        raise DegenerateMaskError("mask has no foreground pixels")
    return mask


def check_same_shape(a, b, what="arrays"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def check_fraction(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive_int(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value}")
    return int(value)


def check_matrix(X, n_features=None, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_features}")
    return X


class DegenerateMaskError(ValueError):
    """Raised when a mask selects no pixels where at least one is required."""
