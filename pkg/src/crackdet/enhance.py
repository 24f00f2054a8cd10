"""Weighted grayscale conversion and percentile-saturated contrast stretching."""

from dataclasses import dataclass

import numpy as np

from .core import DomainError, as_gray, as_rgb, histogram, percentile_intensity

@dataclass(frozen=True)
class StretchParams:
    low_saturation: float = 0.01
    high_saturation: float = 0.01

    def __post_init__(self):
        for name in ("low_saturation", "high_saturation"):
            value = getattr(self, name)
            if not 0.0 <= value < 0.5:
                raise DomainError(f"{name} must lie in [0, 0.5), got {value}")


def to_grayscale(image) -> np.ndarray:
    """Luminance ``0.3 r + 0.59 g + 0.11 b``, rounded half up."""
    rgb = as_rgb(image)
    # integer arithmetic in hundredths keeps the .5 cases exact:
    # 0.3*255 must give 76.5 -> 77, which float weights get wrong
    r, g, b = (rgb[..., i].astype(np.int32) for i in range(3))
    hundredths = 30 * r + 59 * g + 11 * b
    gray = (hundredths + 50) // 100
    return np.clip(gray, 0, 255).astype(np.uint8)


def stretch_contrast(image, params: StretchParams = StretchParams()):
    """Linearly map the saturated intensity range onto 0..255.

    ``f_low`` and ``f_high`` are the low/high percentile intensities;
    values outside the range clamp to 0 or 255. Returns ``(stretched,
    degenerate)``; a degenerate (``f_low == f_high``) input maps to all
    zeros.
    """
    gray = as_gray(image)
    if gray.size == 0:
        raise DomainError("cannot stretch an empty image")
    hist = histogram(gray)
    f_low = percentile_intensity(hist, params.low_saturation)
    f_high = percentile_intensity(hist, 1.0 - params.high_saturation)
    if f_high <= f_low:
        return np.zeros_like(gray), True
    span = f_high - f_low
    levels = np.clip(np.arange(256, dtype=np.int64), f_low, f_high) - f_low
    # exact round-half-up of 255 * levels / span in integers
    lut = ((2 * 255 * levels + span) // (2 * span)).astype(np.uint8)
    return lut[gray], False
