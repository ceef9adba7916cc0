"""Multi-task driving perception: detection, drivable area and lane segmentation.

Metrics and matching work on numpy arrays. ``train``, ``evaluate`` and
``infer`` take the same config files and checkpoints as the command-line tool.
"""

import torch  # noqa: F401  loads libtorch before the extension

from ._core import (
    ConfigError,
    InfeasibleError,
    InputError,
    ShapeError,
    TrainingAbort,
    confusion_counts,
    detection_metrics,
    dilate_mask,
    evaluate,
    giou,
    infer,
    iou,
    lane_metrics,
    measure_fps,
    pairwise_cosine,
    region_miou,
    similarity_histogram,
    solve_assignment,
    synthetic_sample,
    train,
)

__all__ = [
    "ConfigError",
    "InfeasibleError",
    "InputError",
    "ShapeError",
    "TrainingAbort",
    "confusion_counts",
    "detection_metrics",
    "dilate_mask",
    "evaluate",
    "giou",
    "infer",
    "iou",
    "lane_metrics",
    "measure_fps",
    "pairwise_cosine",
    "region_miou",
    "similarity_histogram",
    "solve_assignment",
    "synthetic_sample",
    "train",
]
