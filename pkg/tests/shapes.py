"""Random test masks."""

import numpy as np


def blob_mask(rng, height, width, blobs=None):
    """Union of random filled ellipses, some with an elliptical hole."""
    yy, xx = np.mgrid[0:height, 0:width]
    mask = np.zeros((height, width), dtype=bool)
    count = rng.integers(1, 5) if blobs is None else blobs
    for _ in range(count):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry = rng.uniform(2, max(3, height / 3))
        rx = rng.uniform(2, max(3, width / 3))
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        mask |= inside
        if rng.random() < 0.4 and min(ry, rx) > 6:
            hole = ((yy - cy) / (ry / 2.5)) ** 2 + ((xx - cx) / (rx / 2.5)) ** 2 <= 1
            mask &= ~hole
    return mask


def has_pinch(mask):
    """True if some 2x2 window holds a lone diagonal pair (of either colour)."""
    m = np.pad(np.asarray(mask, dtype=np.int8), 1)
    a, b, c, d = m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]
    return bool((((a + b + c + d) == 2) & (a == d)).any())
