"""Slow, independent reference implementations used as test oracles.

Everything here works pixel by pixel in plain Python so it shares no code
path with the vectorised package implementation.
"""

from collections import deque
from fractions import Fraction

import numpy as np


def round_half_up(q: Fraction) -> int:
    return int((q + Fraction(1, 2)).__floor__())


def gray_pixel(r, g, b) -> int:
    value = round_half_up(Fraction(3, 10) * r + Fraction(59, 100) * g + Fraction(11, 100) * b)
    return min(max(value, 0), 255)


def gray_image(rgb):
    h, w, _ = rgb.shape
    return np.array([[gray_pixel(*map(int, rgb[y, x])) for x in range(w)] for y in range(h)], dtype=np.uint8)


def percentile_scan(values, fraction) -> int:
    """Smallest v with #(pixels <= v) >= fraction * total, by linear scan."""
    values = [int(v) for v in values]
    total = len(values)
    target = Fraction(fraction).limit_denominator(10**9) * total
    for v in range(256):
        if sum(1 for x in values if x <= v) >= max(target, 1):
            return v
    raise AssertionError("unreachable")


def stretch_image(gray, low, high):
    flat = [int(v) for v in gray.ravel()]
    f_low = percentile_scan(flat, low)
    f_high = percentile_scan(flat, 1 - Fraction(high).limit_denominator(10**9))
    out = np.zeros_like(gray)
    if f_high == f_low:
        return out, True
    for idx, f in enumerate(flat):
        q = Fraction(f - f_low, f_high - f_low)
        q = min(max(q, Fraction(0)), Fraction(1))
        out.flat[idx] = round_half_up(255 * q)
    return out, False


def threshold_image(gray, t):
    h, w = gray.shape
    return np.array([[int(gray[y, x]) <= t for x in range(w)] for y in range(h)], dtype=bool)


def median_image(gray, radius):
    h, w = gray.shape
    out = np.zeros_like(gray)
    for y in range(h):
        for x in range(w):
            window = []
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    window.append(int(gray[yy, xx]))
            window.sort()
            out[y, x] = window[len(window) // 2]
    return out


def majority_image(mask, radius):
    h, w = mask.shape
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            votes = 0
            n = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    votes += bool(mask[yy, xx])
                    n += 1
            out[y, x] = votes * 2 > n
    return out


def otsu_brute(bins) -> int:
    """Exhaustive argmax of w0*w1*(mu0-mu1)^2 over t in 0..254, smallest t on ties.

    Scores are computed straight from each candidate partition; a float pass
    shortlists the near-maximal candidates and exact fractions settle them.
    """
    bins = np.asarray(bins, dtype=np.float64)
    levels = np.arange(256, dtype=np.float64)
    total = bins.sum()
    scores = np.zeros(255)
    for t in range(255):
        lower = levels <= t
        n0, n1 = bins[lower].sum(), bins[~lower].sum()
        if n0 == 0 or n1 == 0:
            continue
        mu0 = (bins[lower] * levels[lower]).sum() / n0
        mu1 = (bins[~lower] * levels[~lower]).sum() / n1
        scores[t] = (n0 / total) * (n1 / total) * (mu0 - mu1) ** 2
    best = scores.max()
    if best == 0:
        return 0
    shortlist = [t for t in range(255) if scores[t] >= best * (1 - 1e-9)]
    counts = [int(c) for c in bins]
    n = sum(counts)

    def exact(t):
        n0 = sum(counts[: t + 1])
        n1 = n - n0
        mu0 = Fraction(sum(i * c for i, c in enumerate(counts[: t + 1])), n0)
        mu1 = Fraction(sum((i + t + 1) * c for i, c in enumerate(counts[t + 1 :])), n1)
        return Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2

    exact_scores = {t: exact(t) for t in shortlist}
    top = max(exact_scores.values())
    return min(t for t, s in exact_scores.items() if s == top)


# --------------------------------------------------------------------------
# binary morphology

# The eight thinning elements written out by hand (1 hit, 0 miss, -1 any),
# in application order: edge, corner, each turned a further 90 degrees
# counter-clockwise.
HAND_ELEMENTS = [
    [[0, 0, 0], [-1, 1, -1], [1, 1, 1]],
    [[-1, 0, 0], [1, 1, 0], [-1, 1, -1]],
    [[0, -1, 1], [0, 1, 1], [0, -1, 1]],
    [[0, 0, -1], [0, 1, 1], [-1, 1, -1]],
    [[1, 1, 1], [-1, 1, -1], [0, 0, 0]],
    [[-1, 1, -1], [0, 1, 1], [0, 0, -1]],
    [[1, -1, 0], [1, 1, 0], [1, -1, 0]],
    [[-1, 1, -1], [1, 1, 0], [-1, 0, 0]],
]


def _px(mask, y, x):
    h, w = mask.shape
    return bool(mask[y, x]) if 0 <= y < h and 0 <= x < w else False


def hit_or_miss_pixelwise(mask, grid):
    h, w = mask.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for dy in range(3):
                for dx in range(3):
                    want = grid[dy][dx]
                    if want == -1:
                        continue
                    if _px(mask, y + dy - 1, x + dx - 1) != bool(want):
                        ok = False
            out[y, x] = ok
    return out


def thin_reference(mask, max_passes=1000):
    current = np.array(mask, dtype=bool)
    passes = 0
    while passes < max_passes:
        passes += 1
        before = current.copy()
        for grid in HAND_ELEMENTS:
            current = current & ~hit_or_miss_pixelwise(current, grid)
        if np.array_equal(before, current):
            break
    return current, passes


def _neighbours(connectivity):
    if connectivity == 4:
        return [(-1, 0), (1, 0), (0, -1), (0, 1)]
    return [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


def union_find_labels(mask, connectivity):
    """Union-find labelling, relabelled in raster first-encounter order."""
    h, w = mask.shape
    parent = list(range(h * w))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in _neighbours(connectivity):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and mask[yy, xx]:
                    a, b = find(y * w + x), find(yy * w + xx)
                    if a != b:
                        parent[max(a, b)] = min(a, b)
    labels = np.zeros((h, w), dtype=np.int64)
    names = {}
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                root = find(y * w + x)
                if root not in names:
                    names[root] = len(names) + 1
                labels[y, x] = names[root]
    return labels, len(names)


def border_flood_fill(mask):
    """Fill background that a 4-connected flood from the border cannot reach."""
    h, w = mask.shape
    outside = np.zeros((h, w), dtype=bool)
    queue = deque()
    for y in range(h):
        for x in range(w):
            if (y in (0, h - 1) or x in (0, w - 1)) and not mask[y, x]:
                outside[y, x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy, dx in _neighbours(4):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and not mask[yy, xx] and not outside[yy, xx]:
                outside[yy, xx] = True
                queue.append((yy, xx))
    return ~outside


def euler_components_minus_holes(mask):
    _, components = union_find_labels(mask, 8)
    filled = border_flood_fill(mask)
    _, holes = union_find_labels(filled & ~np.asarray(mask, dtype=bool), 4)
    return components - holes


def buffered_counts(predicted, truth, radius):
    """(tp, fp, fn, matched_truth) by checking every pair of pixels."""
    pred = list(zip(*np.nonzero(predicted)))
    gt = list(zip(*np.nonzero(truth)))

    def near(p, others):
        return any(max(abs(p[0] - q[0]), abs(p[1] - q[1])) <= radius for q in others)

    tp = sum(near(p, gt) for p in pred)
    matched = sum(near(q, pred) for q in gt)
    return tp, len(pred) - tp, len(gt) - matched, matched
