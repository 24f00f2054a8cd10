"""End-to-end crack detection, crack metrics and buffered evaluation."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .core import DomainError, as_mask, as_rgb
from .enhance import StretchParams, stretch_contrast, to_grayscale
from .morphology import (
    EIGHT,
    FOUR,
    connected_components,
    fill_holes,
    majority_filter,
    median_filter,
    remove_small_components,
    thin_pass,
    thin_to_convergence,
)
from .segment import ThresholdOutcome, ThresholdStrategy, binarize

GRAY_STAGES = ("stretch", "median")
BINARY_STAGES = ("majority_filter", "prune", "fill_holes", "thin")
STAGES = ("grayscale", *GRAY_STAGES, "binarize", *BINARY_STAGES)
DEFAULT_STAGE_ORDER = ("grayscale", "stretch", "binarize", "majority_filter", "prune", "fill_holes", "thin")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    stage_order: tuple = DEFAULT_STAGE_ORDER
    stretch: StretchParams = StretchParams()
    strategy: ThresholdStrategy = ThresholdStrategy()
    filter_radius: int = 1
    min_component_area: int = 20
    connectivity: int = 8
    detection_min_length: float = 10.0
    max_thin_passes: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "stage_order", tuple(self.stage_order))
        validate_stage_order(self.stage_order)
        if self.filter_radius < 1:
            raise ConfigError("filter_radius must be >= 1")
        if self.min_component_area < 0:
            raise ConfigError("min_component_area must be >= 0")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        if self.max_thin_passes < 1:
            raise ConfigError("max_thin_passes must be >= 1")

    def to_dict(self):
        return {
            "stage_order": list(self.stage_order),
            "stretch_low": self.stretch.low_saturation,
            "stretch_high": self.stretch.high_saturation,
            "strategy": str(self.strategy),
            "ittt_epsilon": self.strategy.epsilon,
            "ittt_max_iterations": self.strategy.max_iterations,
            "filter_radius": self.filter_radius,
            "min_area": self.min_component_area,
            "connectivity": self.connectivity,
            "detection_min_length": self.detection_min_length,
        }


def validate_stage_order(order):
    """Raise ConfigError unless ``order`` is a runnable stage sequence.

    grayscale must come first, binarize exactly once, gray-domain stages
    between them, binary stages after binarize, and thin exactly once.
    """
    unknown = [s for s in order if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
    for name in ("grayscale", "binarize", "thin"):
        if order.count(name) != 1:
            raise ConfigError(f"stage order must contain {name!r} exactly once")
    if order[0] != "grayscale":
        raise ConfigError("grayscale must be the first stage")
    split = order.index("binarize")
    misplaced_gray = [s for s in order[split:] if s in GRAY_STAGES]
    if misplaced_gray:
        raise ConfigError(f"gray stage(s) after binarize: {', '.join(misplaced_gray)}")
    misplaced_binary = [s for s in order[:split] if s in BINARY_STAGES]
    if misplaced_binary:
        raise ConfigError(f"binary stage(s) before binarize: {', '.join(misplaced_binary)}")


@dataclass(frozen=True)
class CrackMetrics:
    crack_pixel_area: int = 0
    skeleton_length: float = 0.0
    mean_width: float = 0.0
    component_count: int = 0
    largest_component_fraction: float = 0.0
    crack_detected: bool = False

    def to_dict(self):
        return {
            "area": self.crack_pixel_area,
            "skeleton_length": self.skeleton_length,
            "mean_width": self.mean_width,
            "components": self.component_count,
            "largest_fraction": self.largest_component_fraction,
            "detected": self.crack_detected,
        }


@dataclass(frozen=True, eq=False)
class DetectionReport:
    source: str
    config: PipelineConfig
    threshold_outcome: ThresholdOutcome
    metrics: CrackMetrics
    mask: np.ndarray = field(repr=False)
    skeleton: np.ndarray = field(repr=False)
    stage_artifacts: dict = field(default_factory=dict)
    degenerate_flags: tuple = ()
    # intermediate images by stage name, kept only on request
    stages: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "source": self.source,
            "config": self.config.to_dict(),
            "threshold": self.threshold_outcome.threshold,
            "iterations": self.threshold_outcome.iterations,
            "converged": self.threshold_outcome.converged,
            "metrics": self.metrics.to_dict(),
            "flags": list(self.degenerate_flags),
            "artifacts": dict(self.stage_artifacts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# metrics


def skeleton_component_lengths(skeleton) -> np.ndarray:
    """Minimum-spanning-tree length of each 8-connected skeleton component.

    Axial neighbours are 1 apart and diagonal ones sqrt(2). Kruskal takes
    every axial edge it can first, so a component of ``n`` pixels made of
    ``c4`` 4-connected pieces costs ``(n - c4) + sqrt(2) * (c4 - 1)``.
    """
    skel = as_mask(skeleton)
    labels8, n8 = ndimage.label(skel, structure=EIGHT)
    if n8 == 0:
        return np.zeros(0)
    labels4, n4 = ndimage.label(skel, structure=FOUR)
    pixels = np.bincount(labels8.ravel(), minlength=n8 + 1)[1:]
    # each 4-piece lies inside exactly one 8-component
    owner = np.zeros(n4 + 1, dtype=np.int64)
    owner[labels4[skel]] = labels8[skel]
    pieces = np.bincount(owner[1:], minlength=n8 + 1)[1:]
    return (pixels - pieces) + math.sqrt(2) * (pieces - 1)


def crack_metrics(mask, skeleton, detection_min_length: float = 10.0, connectivity: int = 8) -> CrackMetrics:
    m, skel = as_mask(mask), as_mask(skeleton)
    if m.shape != skel.shape:
        raise DomainError("mask and skeleton differ in shape")
    if (skel & ~m).any():
        raise DomainError("skeleton is not a subset of the mask")
    area = int(m.sum())
    lengths = skeleton_component_lengths(skel)
    total_length = float(lengths.sum())
    comps = connected_components(m, connectivity)
    largest = int(comps.areas[1:].max()) if comps.component_count else 0
    return CrackMetrics(
        crack_pixel_area=area,
        skeleton_length=total_length,
        mean_width=area / total_length if total_length > 0 else 0.0,
        component_count=comps.component_count,
        largest_component_fraction=largest / area if area else 0.0,
        crack_detected=bool(lengths.size and lengths.max() >= detection_min_length),
    )


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(image, config: PipelineConfig = PipelineConfig(), source: str = "", keep_stages: bool = False) -> DetectionReport:
    """Run ``config.stage_order`` on an RGB raster and measure the result."""
    validate_stage_order(config.stage_order)
    data = as_rgb(image)
    flags = []
    outcome = None
    pre_thin = None
    stages = {"original": data} if keep_stages else {}

    for stage in config.stage_order:
        try:
            if stage == "grayscale":
                data = to_grayscale(data)
            elif stage == "stretch":
                data, degenerate = stretch_contrast(data, config.stretch)
                if degenerate:
                    flags.append("stretch_degenerate")
            elif stage == "median":
                data = median_filter(data, config.filter_radius)
            elif stage == "binarize":
                if data.min() == data.max():
                    # no dark class to separate from
                    flags.append("constant_image")
                    outcome = ThresholdOutcome(0, 1, True, (0,))
                    data = np.zeros(data.shape, dtype=bool)
                else:
                    data, outcome = binarize(data, config.strategy)
                    if not outcome.converged:
                        flags.append("threshold_not_converged")
            elif stage == "majority_filter":
                data = majority_filter(data, config.filter_radius)
            elif stage == "prune":
                data = remove_small_components(data, config.min_component_area, config.connectivity)
            elif stage == "fill_holes":
                data = fill_holes(data)
            elif stage == "thin":
                pre_thin = data
                data, passes = thin_to_convergence(data, config.max_thin_passes)
                if passes == config.max_thin_passes and not np.array_equal(thin_pass(data), data):
                    flags.append("thin_not_converged")
        except (DomainError, ValueError, ArithmeticError) as exc:
            raise StageError(stage, exc) from exc
        if keep_stages:
            stages[stage] = data

    skeleton = data
    if not np.array_equal(skeleton & pre_thin, skeleton):
        # stages after thinning may grow the mask beyond the pre-thinning mask
        flags.append("skeleton_clipped")
        skeleton = skeleton & pre_thin
    metrics = crack_metrics(pre_thin, skeleton, config.detection_min_length, config.connectivity)
    if not pre_thin.any():
        flags.append("empty_mask")
    if metrics.component_count > 1:
        flags.append("residual_noise")
    return DetectionReport(
        source=str(source),
        config=config,
        threshold_outcome=outcome,
        metrics=metrics,
        mask=pre_thin,
        skeleton=skeleton,
        degenerate_flags=tuple(flags),
        stages=stages,
    )


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalScore:
    true_positive: int
    false_positive: int
    false_negative: int
    # truth pixels with a prediction within the tolerance
    matched_truth: int
    precision: float
    recall: float
    f1: float
    tolerance_radius: int

    @classmethod
    def from_counts(cls, tp, fp, fn, matched, tolerance_radius):
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = matched / (matched + fn) if matched + fn else 1.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, matched, precision, recall, f1, tolerance_radius)

    def to_dict(self):
        return asdict(self)


def _near(mask, radius):
    if radius <= 0:
        return mask
    return ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=False)


def evaluate(predicted, truth, tolerance_radius: int = 2) -> EvalScore:
    """Buffered pixel scoring with a Chebyshev tolerance.

    A predicted pixel is a true positive when some truth pixel lies within
    ``tolerance_radius``; a truth pixel is a false negative when no
    predicted pixel does. Recall counts matches on the truth side, so
    swapping the arguments swaps precision and recall.
    """
    pred, gt = as_mask(predicted), as_mask(truth)
    if pred.shape != gt.shape:
        raise DomainError(f"shape mismatch: predicted {pred.shape} vs truth {gt.shape}")
    if tolerance_radius < 0:
        raise DomainError("tolerance_radius must be >= 0")
    near_truth = _near(gt, tolerance_radius)
    near_pred = _near(pred, tolerance_radius)
    tp = int(np.count_nonzero(pred & near_truth))
    fp = int(np.count_nonzero(pred & ~near_truth))
    matched = int(np.count_nonzero(gt & near_pred))
    fn = int(np.count_nonzero(gt & ~near_pred))
    return EvalScore.from_counts(tp, fp, fn, matched, tolerance_radius)


def micro_average(scores, tolerance_radius: int = 2) -> EvalScore:
    scores = list(scores)
    return EvalScore.from_counts(
        sum(s.true_positive for s in scores),
        sum(s.false_positive for s in scores),
        sum(s.false_negative for s in scores),
        sum(s.matched_truth for s in scores),
        tolerance_radius,
    )
