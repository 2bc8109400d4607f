"""Data preparation: masks, hierarchical targets, weights, folds, augmentation, datasets."""

from .annotations import (
    PolygonInstance,
    SemanticMask,
    load_via_annotations,
    polygons_to_mask,
    rasterize_polygon,
)
from .augment import AugmentationConfig, augment
from .class_weights import (
    LossWeights,
    class_statistics,
    compute_class_weights,
    compute_flat_class_weights,
    format_class_statistics,
)
from .dataset import DatasetPaths, HierSegDataset
from .folds import FoldSplits, load_fold_manifest, make_folds, save_fold_manifest
from .targets import (
    HierTargetStack,
    flat_targets,
    full_class_targets,
    hier_targets_to_mask,
    mask_to_hier_targets,
)

__all__ = [
    "AugmentationConfig",
    "DatasetPaths",
    "FoldSplits",
    "HierSegDataset",
    "HierTargetStack",
    "LossWeights",
    "PolygonInstance",
    "SemanticMask",
    "augment",
    "class_statistics",
    "compute_class_weights",
    "compute_flat_class_weights",
    "flat_targets",
    "format_class_statistics",
    "full_class_targets",
    "hier_targets_to_mask",
    "load_fold_manifest",
    "load_via_annotations",
    "make_folds",
    "mask_to_hier_targets",
    "polygons_to_mask",
    "rasterize_polygon",
    "save_fold_manifest",
]
