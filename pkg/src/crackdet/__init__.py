"""Histogram-based crack detection: enhancement, thresholding, binary
morphology, metrics, a synthetic corpus generator and a batch CLI."""

from .core import DomainError, histogram, percentile_intensity
from .enhance import StretchParams, stretch_contrast, to_grayscale
from .imageio import DecodeError, load_image, save_binary, save_gray
from .morphology import (
    LabelImage,
    StructuringElementPair,
    THINNING_ELEMENTS,
    connected_components,
    euler_number,
    fill_holes,
    hit_or_miss,
    majority_filter,
    median_filter,
    remove_small_components,
    thin_once,
    thin_pass,
    thin_to_convergence,
)
from .pipeline import (
    ConfigError,
    CrackMetrics,
    DetectionReport,
    EvalScore,
    PipelineConfig,
    crack_metrics,
    evaluate,
    run_pipeline,
)
from .segment import (
    ThresholdOutcome,
    ThresholdStrategy,
    binarize,
    ittt_threshold,
    otsu_threshold,
    threshold_fixed,
)
from .synth import SynthParams, generate, generate_corpus

__version__ = "0.1.0"
