"""Raster conventions and intensity histograms.

Images are plain numpy arrays:

* color raster: ``(height, width, 3)`` ``uint8``
* gray image: ``(height, width)`` ``uint8``
* binary mask: ``(height, width)`` ``bool``, ``True`` marks crack material
* histogram: ``(256,)`` ``int64`` counts indexed by intensity

Functions in this package never modify their inputs.
"""

import math

import numpy as np

N_LEVELS = 256


class DomainError(ValueError):
    """Raised when an operation is called outside its valid input domain."""


def as_rgb(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DomainError(f"expected (H, W, 3) raster, got shape {arr.shape}")
    _check_nonempty(arr)
    return _as_u8(arr)


def as_gray(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DomainError(f"expected (H, W) gray image, got shape {arr.shape}")
    return _as_u8(arr)


def as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DomainError(f"expected (H, W) mask, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def _check_nonempty(arr):
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DomainError("image has zero area")


def _as_u8(arr):
    if arr.dtype == np.uint8:
        return arr
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise DomainError("intensities must lie in [0, 255]")
    return arr.astype(np.uint8)


def histogram(image) -> np.ndarray:
    """Count pixels per intensity level (256 bins)."""
    gray = as_gray(image)
    return np.bincount(gray.ravel(), minlength=N_LEVELS).astype(np.int64)


def as_histogram(hist) -> np.ndarray:
    bins = np.asarray(hist, dtype=np.int64)
    if bins.shape != (N_LEVELS,):
        raise DomainError(f"histogram must have {N_LEVELS} bins, got {bins.shape}")
    if (bins < 0).any():
        raise DomainError("histogram counts must be non-negative")
    return bins


def percentile_intensity(hist, fraction: float) -> int:
    """Smallest intensity whose cumulative count reaches ``fraction * total``.

    The upper cut of a two-sided saturation is
    ``percentile_intensity(hist, 1 - fraction)``.
    """
    bins = as_histogram(hist)
    total = int(bins.sum())
    if total < 1:
        raise DomainError("percentile of an empty histogram")
    if not 0.0 <= fraction <= 1.0:
        raise DomainError(f"fraction must lie in [0, 1], got {fraction}")
    # counts are integers, so "cumulative >= fraction * total" means
    # "cumulative >= ceil(fraction * total)"; the slack absorbs float error
    # such as 0.99 * 100 == 98.99999999999999. Fraction 0 yields the first
    # occupied bin.
    needed = max(math.ceil(fraction * total - 1e-9), 1)
    cumulative = np.cumsum(bins)
    return int(np.searchsorted(cumulative, needed, side="left"))
