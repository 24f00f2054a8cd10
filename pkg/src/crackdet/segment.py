"""Binarization: fixed threshold, Otsu, and iterative tri-class refinement.

All masks use ``True`` for the dark (crack) class: a pixel is foreground
iff its intensity is ``<= threshold``.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import N_LEVELS, DomainError, as_gray, as_histogram, histogram


@dataclass(frozen=True)
class ThresholdStrategy:
    kind: str = "otsu"
    t: int = 128
    epsilon: int = 1
    max_iterations: int = 50

    def __post_init__(self):
        if self.kind not in ("fixed", "otsu", "ittt"):
            raise DomainError(f"unknown threshold strategy {self.kind!r}")
        if not 0 <= self.t <= 255:
            raise DomainError(f"fixed threshold must lie in [0, 255], got {self.t}")
        if self.epsilon < 0:
            raise DomainError("ittt epsilon must be >= 0")
        if self.max_iterations < 1:
            raise DomainError("ittt max_iterations must be >= 1")

    @classmethod
    def parse(cls, text: str, epsilon: int = 1, max_iterations: int = 50):
        """Parse ``otsu``, ``ittt`` or ``fixed:<t>``."""
        text = text.strip().lower()
        if text.startswith("fixed:"):
            try:
                t = int(text.split(":", 1)[1])
            except ValueError:
                raise DomainError(f"bad fixed threshold in {text!r}") from None
            return cls("fixed", t=t)
        if text in ("otsu", "ittt"):
            return cls(text, epsilon=epsilon, max_iterations=max_iterations)
        raise DomainError(f"unknown threshold strategy {text!r}")

    def __str__(self):
        return f"fixed:{self.t}" if self.kind == "fixed" else self.kind


@dataclass(frozen=True)
class ThresholdOutcome:
    threshold: int
    iterations: int = 1
    converged: bool = True
    # successive thresholds T0..Tk examined by the strategy
    trace: tuple = field(default=())


def threshold_fixed(image, t: int) -> np.ndarray:
    if not 0 <= t <= 255:
        raise DomainError(f"threshold must lie in [0, 255], got {t}")
    return as_gray(image) <= t


def _between_class_scores(bins):
    """Exact between-class variance (up to the constant 1/N^2) for t = 0..254.

    Returned as (numerator, denominator) Python ints so ties compare exactly:
    N0*N1*(mu0 - mu1)^2 == (S0*N1 - S1*N0)^2 / (N0*N1).
    """
    counts = [int(c) for c in bins]
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    scores = []
    n0 = s0 = 0
    for t in range(N_LEVELS - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total_n - n0
        s1 = total_s - s0
        if n0 == 0 or n1 == 0:
            scores.append((0, 1))
        else:
            diff = s0 * n1 - s1 * n0
            scores.append((diff * diff, n0 * n1))
    return scores


def otsu_threshold(hist) -> ThresholdOutcome:
    """Threshold maximizing between-class variance; class 0 is ``<= t``.

    Ties go to the smallest ``t``; a single-valued histogram gives 0.
    """
    bins = as_histogram(hist)
    if bins.sum() < 1:
        raise DomainError("otsu of an empty histogram")
    best_t, (best_num, best_den) = 0, (0, 1)
    for t, (num, den) in enumerate(_between_class_scores(bins)):
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return ThresholdOutcome(best_t, 1, True, (best_t,))


@dataclass(frozen=True)
class _TriclassStep:
    threshold: int
    # undecided region as the half-open intensity interval (low, high]
    low: Fraction
    high: Fraction


def _class_mean(bins, lo, hi):
    levels = np.arange(N_LEVELS)
    sel = (levels > lo) & (levels <= hi)
    n = int(bins[sel].sum())
    if n == 0:
        return None
    return Fraction(int((levels[sel] * bins[sel]).sum()), n)


def _restrict(bins, low, high):
    levels = np.arange(N_LEVELS)
    return np.where((levels > low) & (levels <= high), bins, 0)


def ittt_steps(hist, epsilon: int = 1, max_iterations: int = 50):
    """Run the tri-class loop, returning ``(outcome, steps)``.

    ``steps[k]`` records the threshold produced at step ``k`` and the
    undecided region it was computed on (``steps[0]`` is the full range).
    """
    bins = as_histogram(hist)
    if bins.sum() < 1:
        raise DomainError("ittt on an empty image")
    low, high = Fraction(-1), Fraction(255)
    prev = otsu_threshold(bins).threshold
    steps = [_TriclassStep(prev, low, high)]
    region = bins
    for k in range(1, max_iterations + 1):
        mean_dark = _class_mean(region, low, prev)
        mean_bright = _class_mean(region, prev, high)
        if mean_dark is None or mean_bright is None:
            # threshold no longer splits the region
            return ThresholdOutcome(prev, k, True, _trace(steps)), steps
        low, high = mean_dark, mean_bright
        region = _restrict(bins, low, high)
        if np.count_nonzero(region) < 2:
            # nothing (or a single level) left undecided
            return ThresholdOutcome(prev, k, True, _trace(steps)), steps
        current = otsu_threshold(region).threshold
        steps.append(_TriclassStep(current, low, high))
        if abs(current - prev) <= epsilon:
            # keep the threshold that the refinement confirmed
            return ThresholdOutcome(prev, k, True, _trace(steps)), steps
        prev = current
    return ThresholdOutcome(prev, max_iterations, False, _trace(steps)), steps


def _trace(steps):
    return tuple(s.threshold for s in steps)


def ittt_threshold(image, epsilon: int = 1, max_iterations: int = 50) -> ThresholdOutcome:
    gray = as_gray(image)
    if gray.size == 0:
        raise DomainError("ittt on an empty image")
    outcome, _ = ittt_steps(histogram(gray), epsilon, max_iterations)
    return outcome


def choose_threshold(image, strategy: ThresholdStrategy) -> ThresholdOutcome:
    gray = as_gray(image)
    if gray.size == 0:
        raise DomainError("cannot binarize an empty image")
    if strategy.kind == "fixed":
        return ThresholdOutcome(strategy.t, 1, True, (strategy.t,))
    if strategy.kind == "otsu":
        return otsu_threshold(histogram(gray))
    return ittt_threshold(gray, strategy.epsilon, strategy.max_iterations)


def binarize(image, strategy: ThresholdStrategy = ThresholdStrategy()):
    """Pick a threshold with ``strategy`` and apply it; returns ``(mask, outcome)``."""
    outcome = choose_threshold(image, strategy)
    return threshold_fixed(image, outcome.threshold), outcome
