"""Binary raster operators: median/majority filtering, hit-or-miss thinning,
hole filling, connected components and the Euler number.

Masks are boolean arrays with ``True`` as foreground (crack).
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .core import DomainError, as_gray, as_mask

FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)

# neighbour (dy, dx) offsets, bit j of a neighbourhood code is NEIGHBOURS[j]
NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True, eq=False)
class StructuringElementPair:
    """3x3 hit (must be foreground) and miss (must be background) cells."""

    hit: np.ndarray
    miss: np.ndarray

    def __post_init__(self):
        hit = np.asarray(self.hit, dtype=bool)
        miss = np.asarray(self.miss, dtype=bool)
        if hit.shape != (3, 3) or miss.shape != (3, 3):
            raise DomainError("structuring elements are 3x3")
        if (hit & miss).any():
            raise DomainError("hit and miss cells overlap")
        object.__setattr__(self, "hit", hit)
        object.__setattr__(self, "miss", miss)

    @classmethod
    def from_pattern(cls, pattern):
        """Build from a 3x3 grid of 1 (hit), 0 (miss) and -1 (don't care)."""
        grid = np.asarray(pattern)
        return cls(grid == 1, grid == 0)

    def rotate(self, quarter_turns: int):
        return StructuringElementPair(np.rot90(self.hit, quarter_turns), np.rot90(self.miss, quarter_turns))

    def matches(self, code: int) -> bool:
        """Does a foreground centre with neighbourhood ``code`` match?"""
        if self.miss[1, 1]:
            return False
        for bit, (dy, dx) in enumerate(NEIGHBOURS):
            on = bool(code >> bit & 1)
            if self.hit[1 + dy, 1 + dx] and not on:
                return False
            if self.miss[1 + dy, 1 + dx] and on:
                return False
        return True


EDGE_ELEMENT = StructuringElementPair.from_pattern([[0, 0, 0], [-1, 1, -1], [1, 1, 1]])
CORNER_ELEMENT = StructuringElementPair.from_pattern([[-1, 0, 0], [1, 1, 0], [-1, 1, -1]])

THINNING_ELEMENTS = tuple(
    element.rotate(k) for k in range(4) for element in (EDGE_ELEMENT, CORNER_ELEMENT)
)

_LUTS = tuple(
    np.array([se.matches(code) for code in range(256)], dtype=bool) for se in THINNING_ELEMENTS
)


# ---------------------------------------------------------------------------
# filters


def median_filter(image, radius: int = 1) -> np.ndarray:
    """Median over the (2r+1)^2 window, replicate padding at the borders."""
    if radius < 1:
        raise DomainError("median radius must be >= 1")
    gray = as_gray(image)
    size = 2 * radius + 1
    padded = np.pad(gray, radius, mode="edge")
    windows = sliding_window_view(padded, (size, size)).reshape(*gray.shape, size * size)
    middle = size * size // 2
    return np.partition(windows, middle, axis=-1)[..., middle]


def majority_filter(mask, radius: int = 1) -> np.ndarray:
    """Median of booleans: a pixel is on iff most of its window is on."""
    if radius < 1:
        raise DomainError("majority radius must be >= 1")
    m = as_mask(mask)
    size = 2 * radius + 1
    padded = np.pad(m, radius, mode="edge").astype(np.int32)
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int32)
    integral[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = m.shape
    counts = (
        integral[size : size + h, size : size + w]
        - integral[:h, size : size + w]
        - integral[size : size + h, :w]
        + integral[:h, :w]
    )
    return counts > (size * size) // 2


# ---------------------------------------------------------------------------
# hit-or-miss thinning


def hit_or_miss(mask, se: StructuringElementPair) -> np.ndarray:
    """Pixels where every hit cell is foreground and every miss cell background.

    Pixels outside the image count as background.
    """
    m = as_mask(mask)
    h, w = m.shape
    padded = np.pad(m, 1, constant_values=False)
    out = np.ones_like(m)
    for dy in range(3):
        for dx in range(3):
            if se.hit[dy, dx]:
                out &= padded[dy : dy + h, dx : dx + w]
            elif se.miss[dy, dx]:
                out &= ~padded[dy : dy + h, dx : dx + w]
    return out


def thin_once(mask, se: StructuringElementPair) -> np.ndarray:
    m = as_mask(mask)
    return m & ~hit_or_miss(m, se)


def _thin_padded(padded, fg, passes_left):
    """Apply up to ``passes_left`` thinning passes in place on a padded mask.

    ``fg`` holds the flat indices of foreground pixels. Returns the number
    of passes run and whether the last one changed nothing.

    Every element has a miss cell, so a pixel whose eight neighbours are
    all foreground never matches, and a pixel that failed an element keeps
    failing it until its neighbourhood changes. Each element therefore only
    re-examines boundary pixels next to a removal since its last turn.
    Neighbourhood codes are kept per pixel and patched on removal.
    """
    h, w = padded.shape
    offsets = [dy * w + dx for dy, dx in NEIGHBOURS]
    flat = padded.reshape(-1)
    codes = np.zeros(h * w, dtype=np.uint8)
    inner = slice(w + 1, h * w - w - 1)
    for bit, off in enumerate(offsets):
        codes[inner] |= flat[w + 1 + off : h * w - w - 1 + off].view(np.uint8) << bit
    stamp = np.full(h * w, -1, dtype=np.intp)
    boundary = fg[codes[fg] != 255]
    pending = [[boundary] for _ in _LUTS]
    passes = 0
    while passes < passes_left:
        passes += 1
        changed = False
        for k, lut in enumerate(_LUTS):
            if not pending[k]:
                continue
            queued = np.concatenate(pending[k])
            pending[k] = []
            queued = queued[flat[queued]]
            # drop repeats: keep the one position the stamp write landed on
            order = np.arange(queued.size)
            stamp[queued] = order
            cand = queued[stamp[queued] == order]
            hits = lut[codes[cand]]
            if not hits.any():
                continue
            # every pixel of this element is judged before any is removed
            removed = cand[hits]
            flat[removed] = False
            near = []
            for bit, off in enumerate(offsets):
                # removed pixels are distinct, so no index repeats per offset
                codes[removed - off] &= np.uint8(~(1 << bit) & 0xFF)
                near.append(removed + off)
            near = np.concatenate(near)
            near = near[flat[near]]
            for queue in pending:
                queue.append(near)
            changed = True
        if not changed:
            return passes, True
    return passes, False


def _padded_with_indices(mask):
    padded = np.pad(as_mask(mask), 1, constant_values=False)
    return padded, np.flatnonzero(padded)


def thin_pass(mask) -> np.ndarray:
    """One pass of the eight thinning elements applied in sequence."""
    padded, fg = _padded_with_indices(mask)
    _thin_padded(padded, fg, 1)
    return padded[1:-1, 1:-1].copy()


def thin_to_convergence(mask, max_passes: int = 1000):
    """Repeat :func:`thin_pass` until nothing changes.

    Returns ``(skeleton, passes)``; ``passes`` includes the final pass that
    confirmed the fixpoint, so an already-thin mask reports 1.
    """
    if max_passes < 1:
        raise DomainError("max_passes must be >= 1")
    padded, fg = _padded_with_indices(mask)
    passes, _ = _thin_padded(padded, fg, max_passes)
    return padded[1:-1, 1:-1].copy(), passes


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, eq=False)
class LabelImage:
    labels: np.ndarray
    component_count: int
    connectivity: int = 8

    @property
    def areas(self) -> np.ndarray:
        """Pixel count per label; index 0 is the background."""
        return np.bincount(self.labels.ravel(), minlength=self.component_count + 1)


def _structure(connectivity):
    if connectivity == 4:
        return FOUR
    if connectivity == 8:
        return EIGHT
    raise DomainError(f"connectivity must be 4 or 8, got {connectivity}")


def connected_components(mask, connectivity: int = 8) -> LabelImage:
    """Label foreground components in raster-scan first-encounter order."""
    labels, count = ndimage.label(as_mask(mask), structure=_structure(connectivity))
    return LabelImage(labels.astype(np.int32, copy=False), int(count), connectivity)


def remove_small_components(mask, min_area: int, connectivity: int = 8) -> np.ndarray:
    if min_area < 0:
        raise DomainError("min_area must be >= 0")
    m = as_mask(mask)
    if min_area == 0:
        return m.copy()
    comps = connected_components(m, connectivity)
    keep = comps.areas >= min_area
    keep[0] = False
    return keep[comps.labels]


def fill_holes(mask) -> np.ndarray:
    """Turn background not 4-connected to the image border into foreground."""
    m = as_mask(mask)
    labels, _ = ndimage.label(~m, structure=FOUR)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    outside = np.isin(labels, border[border > 0])
    return ~outside


def euler_number(mask) -> int:
    """Components minus holes (8-connected foreground, 4-connected background).

    Counts 2x2 bit-quads over the zero-padded mask:
    E = (Q1 - Q3 - 2 * QD) / 4.
    """
    m = np.pad(as_mask(mask), 1, constant_values=False).astype(np.int8)
    a, b = m[:-1, :-1], m[:-1, 1:]
    c, d = m[1:, :-1], m[1:, 1:]
    ones = a + b + c + d
    q1 = np.count_nonzero(ones == 1)
    q3 = np.count_nonzero(ones == 3)
    qd = np.count_nonzero((ones == 2) & (a == d))
    return (q1 - q3 - 2 * qd) // 4
