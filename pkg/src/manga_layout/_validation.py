"""Input validation helpers used at public entry points."""

from __future__ import annotations

import numpy as np


def check_gray_image(img, name="img") -> np.ndarray:
    """Return ``img`` as a 2-D uint8 array, converting color input to luma."""
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        from .imageio import to_luma

        arr = to_luma(arr)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D grayscale image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return arr


def check_mask(mask, shape=None, name="mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr != 0
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value
