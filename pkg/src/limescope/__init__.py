"""Model-agnostic superpixel explanations for image classifiers.

Pipeline: segment an image into superpixels, sample masked variants, query
the black box on each, fit a locality-weighted ridge surrogate on the mask
bits, and report each segment's contribution. A separate harness computes
classification metrics from prediction logs.
"""

from .dataset import DEFAULT_CLASSES, ClassLabel, DatasetManifest, scan_dataset
from .errors import (
    BatchPredictionError,
    ContractError,
    EmptyDatasetError,
    ImageDecodeError,
    LimescopeError,
    ModelProtocolError,
    ModelSpecError,
    ModelTransportError,
    ModelValidationError,
    UndefinedMetricError,
)
from .explainer import LocalSurrogateExplainer
from .image import RasterImage, image_from_array, load_image, save_image
from .overlay import render_overlay
from .perturb import (
    FusionPolicy,
    PerturbationBatch,
    apply_mask,
    build_batch,
    kernel_weight,
    mask_distance,
    sample_masks,
    segment_mean_colors,
)
from .segmentation import (
    GridSegmenter,
    SegmentationParams,
    SegmentMap,
    SegmentStats,
    SlicSegmenter,
    segment_grid,
    segment_slic,
    segment_stats,
)
from .surrogate import (
    Explanation,
    Provenance,
    RidgeConfig,
    RidgeFit,
    WeightedRidge,
    explain,
    fit_weighted_ridge,
    weighted_r2,
)
from .evaluate import (
    MetricsReport,
    PredictionRecord,
    accuracy,
    confusion_matrix,
    cross_entropy,
    deletion_curve,
    misclassification_report,
    pointing_game,
    read_prediction_log,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ClassLabel",
    "DatasetManifest",
    "DEFAULT_CLASSES",
    "scan_dataset",
    "RasterImage",
    "load_image",
    "save_image",
    "image_from_array",
    "render_overlay",
    "SegmentMap",
    "SegmentationParams",
    "SegmentStats",
    "segment_grid",
    "segment_slic",
    "segment_stats",
    "GridSegmenter",
    "SlicSegmenter",
    "FusionPolicy",
    "PerturbationBatch",
    "sample_masks",
    "apply_mask",
    "mask_distance",
    "kernel_weight",
    "build_batch",
    "segment_mean_colors",
    "Explanation",
    "Provenance",
    "RidgeConfig",
    "RidgeFit",
    "WeightedRidge",
    "fit_weighted_ridge",
    "weighted_r2",
    "explain",
    "LocalSurrogateExplainer",
    "PredictionRecord",
    "MetricsReport",
    "confusion_matrix",
    "accuracy",
    "cross_entropy",
    "misclassification_report",
    "pointing_game",
    "deletion_curve",
    "read_prediction_log",
    "LimescopeError",
    "ContractError",
    "ImageDecodeError",
    "EmptyDatasetError",
    "UndefinedMetricError",
    "ModelSpecError",
    "ModelTransportError",
    "ModelProtocolError",
    "ModelValidationError",
    "BatchPredictionError",
]
