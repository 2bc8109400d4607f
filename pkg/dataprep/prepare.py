"""Dataset preparation: annotations → masks, fold manifest and class weights."""

from __future__ import annotations

import logging
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from tqdm import tqdm

from hier_config import MIN_COMPONENT_PIXELS
from hierarchy import ClassTree, save_class_tree, validate_hierarchy
from utils.errors import DataValidationError, HierarchyFormatError

from .annotations import PolygonInstance, load_via_annotations, polygons_to_mask
from .class_weights import (
    class_statistics,
    compute_class_weights,
    compute_flat_class_weights,
    save_class_weights,
)
from .dataset import DatasetPaths, read_image, read_mask, write_image, write_mask
from .folds import FoldSplits, make_folds, save_fold_manifest
from .targets import flat_targets, mask_to_hier_targets

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


@dataclass
class PrepareSummary:
    image_ids: List[str]
    splits: FoldSplits
    statistics: Dict[str, Dict[str, float]]


def collect_annotations(annotations: Path, class_key: str = "class") -> Dict[str, List[PolygonInstance]]:
    """Read one annotation JSON file, or every ``*.json`` file in a directory."""
    annotations = Path(annotations)
    files = sorted(annotations.glob("*.json")) if annotations.is_dir() else [annotations]
    collected: Dict[str, List[PolygonInstance]] = {}
    for path in files:
        if not path.exists():
            raise DataValidationError(f"annotation file {path} does not exist")
        parsed = load_via_annotations(path.read_text(encoding="utf-8"), class_key=class_key)
        for image_id, instances in parsed.items():
            collected.setdefault(image_id, []).extend(instances)
    if not collected:
        raise DataValidationError(f"no annotations found in {annotations}")
    return collected


def find_image(images_dir: Path, image_id: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        candidate = images_dir / f"{image_id}{suffix}"
        if candidate.exists():
            return candidate
    raise DataValidationError(f"no image file for '{image_id}' in {images_dir}")


def check_tree(tree: ClassTree, source: str = "") -> None:
    """Raise on rule errors; log rule warnings."""
    problems = validate_hierarchy(tree)
    for problem in problems:
        if problem.severity == "warning":
            logger.warning("%s%s", f"{source}: " if source else "", problem)
    errors = [p for p in problems if p.severity == "error"]
    if errors:
        details = "; ".join(str(p) for p in errors)
        raise HierarchyFormatError(f"{source + ': ' if source else ''}invalid hierarchy: {details}")


def write_splits_and_weights(
    paths: DatasetPaths,
    tree: ClassTree,
    k: int = 5,
    holdout_fraction: float = 0.10,
    seed: int = 0,
) -> FoldSplits:
    """Write ``folds.csv`` and ``class_weights.json`` (weights over all non-test images)."""
    image_ids = paths.image_ids()
    splits = make_folds(image_ids, k=k, holdout_fraction=holdout_fraction, seed=seed)
    save_fold_manifest(splits, paths.folds)

    test = set(splits.test_ids)
    masks = [read_mask(paths.mask_path(i)) for i in image_ids if i not in test]
    hierarchical = compute_class_weights((mask_to_hier_targets(m, tree) for m in masks), tree)
    flat = compute_flat_class_weights(flat_targets(m, tree) for m in masks)
    save_class_weights(paths.weights, hierarchical, flat)
    return splits


def prepare_dataset(
    annotations: Path,
    images_dir: Path,
    out_dir: Path,
    tree: ClassTree,
    k: int = 5,
    holdout_fraction: float = 0.10,
    seed: int = 0,
    class_key: str = "class",
    priority: Optional[Sequence[Sequence[str]]] = None,
    min_pixels: int = MIN_COMPONENT_PIXELS,
    progress: bool = True,
) -> PrepareSummary:
    """Rasterize every annotated image and write the prepared dataset layout into ``out_dir``.

    Everything is staged in a temporary directory first, so a failure leaves no partial output.
    """
    check_tree(tree, "class tree")
    collected = collect_annotations(Path(annotations), class_key=class_key)
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)

    staging = Path(tempfile.mkdtemp(prefix=".prepare-", dir=out_dir.parent))
    try:
        paths = DatasetPaths(staging)
        paths.images.mkdir()
        paths.masks.mkdir()
        save_class_tree(tree, paths.class_tree, paths.class_map)

        masks = []
        for image_id in tqdm(sorted(collected), desc="rasterize", disable=not progress):
            image = read_image(find_image(Path(images_dir), image_id))
            height, width = image.shape
            mask = polygons_to_mask(
                collected[image_id], (width, height), tree, priority=priority, min_pixels=min_pixels
            )
            mask.validate(tree)
            write_image(image, paths.image_path(image_id))
            write_mask(mask, paths.mask_path(image_id))
            masks.append(mask)

        splits = write_splits_and_weights(paths, tree, k=k, holdout_fraction=holdout_fraction, seed=seed)
        statistics = class_statistics(masks, tree)

        for source in sorted(p for p in staging.rglob("*") if p.is_file()):
            target = out_dir / source.relative_to(staging)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(source, target)
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    logger.info("prepared %d images into %s", len(collected), out_dir)
    return PrepareSummary(sorted(collected), splits, statistics)
