"""Evaluation: confusion counts, metric aggregation and overlays."""

from .metrics import (
    AVERAGE_ROW,
    METRICS,
    ConfusionCounts,
    MetricsReport,
    aggregate,
    binarize_flat,
    binarize_predictions,
    evaluate_image,
    image_records,
    scores,
)
from .overlay import load_palette, render_overlay, resolve_labels, save_overlay

__all__ = [
    "AVERAGE_ROW",
    "METRICS",
    "ConfusionCounts",
    "MetricsReport",
    "aggregate",
    "binarize_flat",
    "binarize_predictions",
    "evaluate_image",
    "image_records",
    "load_palette",
    "render_overlay",
    "resolve_labels",
    "save_overlay",
    "scores",
]
