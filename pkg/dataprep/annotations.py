"""Polygon annotations → single multiclass semantic masks.

Instances are rasterized one by one in priority order (high to low). Pixels already
claimed by a higher-priority instance are removed, and only connected remnants with
more than ``min_pixels`` pixels are written to the mask.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as draw_polygon

from hier_config import MIN_COMPONENT_PIXELS, PRIORITY_ORDER
from hierarchy import ClassTree
from utils.errors import DataValidationError

logger = logging.getLogger(__name__)

# 8-neighbourhood for connected components
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class PolygonInstance:
    """One annotated object: a class name and its outline in pixel coordinates."""

    class_name: str
    vertices: Tuple[Tuple[float, float], ...]   # (x, y) pairs
    image_id: str = ""

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise DataValidationError(
                f"{self.image_id or 'annotation'}: polygon of '{self.class_name}' has "
                f"{len(self.vertices)} vertices; at least 3 required"
            )


@dataclass
class SemanticMask:
    """H×W integer mask whose values are class-map pixel values."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def validate(self, tree: ClassTree) -> None:
        """Raise if the mask holds unknown values or values of parent classes."""
        allowed = {tree.node(name).pixel_value for name in tree.leaves}
        present = set(np.unique(self.data).tolist())
        unknown = present - allowed
        if unknown:
            raise DataValidationError(
                f"mask contains pixel values {sorted(unknown)} that are not leaf classes "
                f"of the class map"
            )


def priority_ranks(tree: ClassTree, priority: Optional[Sequence[Sequence[str]]] = None) -> Dict[str, int]:
    """Rank each leaf class (0 = highest priority); unlisted classes rank last."""
    tiers = PRIORITY_ORDER if priority is None else priority
    ranks: Dict[str, int] = {}
    for rank, tier in enumerate(tiers):
        for name in tier:
            if name in tree:
                ranks[name] = rank
    lowest = len(tiers)
    return {name: ranks.get(name, lowest) for name in tree.leaves}


def rasterize_polygon(vertices: Sequence[Tuple[float, float]], height: int, width: int) -> np.ndarray:
    """Binary mask of pixels whose centres fall inside the polygon (even-odd rule).

    Vertices outside the image are clipped, not rejected.
    """
    xs = np.asarray([v[0] for v in vertices], dtype=np.float64)
    ys = np.asarray([v[1] for v in vertices], dtype=np.float64)
    # pixel (r, c) has its centre at (c + 0.5, r + 0.5)
    rr, cc = draw_polygon(ys - 0.5, xs - 0.5, shape=(height, width))
    binary = np.zeros((height, width), dtype=bool)
    binary[rr, cc] = True
    return binary


def polygons_to_mask(
    instances: Sequence[PolygonInstance],
    size: Tuple[int, int],
    tree: ClassTree,
    priority: Optional[Sequence[Sequence[str]]] = None,
    min_pixels: int = MIN_COMPONENT_PIXELS,
) -> SemanticMask:
    """Rasterize ``instances`` into one semantic mask of ``size`` = (width, height)."""
    width, height = size
    background = tree.background
    fill = tree.node(background).pixel_value if background is not None else 0
    mask = np.full((height, width), fill, dtype=np.uint8)
    occupied = np.zeros((height, width), dtype=bool)

    ranks = priority_ranks(tree, priority)
    for instance in instances:
        if instance.class_name not in tree:
            raise DataValidationError(
                f"{instance.image_id or 'annotation'}: class '{instance.class_name}' "
                "is not in the class map"
            )
        node = tree.node(instance.class_name)
        if not node.is_leaf or node.pixel_value is None:
            raise DataValidationError(
                f"{instance.image_id or 'annotation'}: class '{instance.class_name}' is a parent "
                "class and cannot be stored in masks"
            )

    ordered = sorted(instances, key=lambda inst: ranks[inst.class_name])
    for instance in ordered:
        value = tree.node(instance.class_name).pixel_value
        remnant = rasterize_polygon(instance.vertices, height, width) & ~occupied
        if not remnant.any():
            continue
        labels, count = ndimage.label(remnant, structure=_EIGHT_CONNECTED)
        sizes = np.bincount(labels.ravel(), minlength=count + 1)
        keep = sizes > min_pixels
        keep[0] = False
        kept = keep[labels]
        dropped = int(count - keep.sum())
        if dropped:
            logger.debug(
                "%s: dropped %d small component(s) of '%s'",
                instance.image_id, dropped, instance.class_name,
            )
        mask[kept] = value
        occupied |= kept

    return SemanticMask(mask)


# ----------------------------------------------------------------------
# VGG-style annotator export
# ----------------------------------------------------------------------


def load_via_annotations(json_text: str, class_key: str = "class") -> Dict[str, List[PolygonInstance]]:
    """Parse a VGG-style annotator export into polygon instances keyed by image id.

    The image id is the file name without extension. Regions may be a list or a dict;
    non-polygon shapes are skipped.
    """
    try:
        payload = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"annotation file is not valid JSON: {exc}") from exc
    if "_via_img_metadata" in payload:
        payload = payload["_via_img_metadata"]

    result: Dict[str, List[PolygonInstance]] = {}
    for key, entry in payload.items():
        filename = entry.get("filename", key)
        image_id = filename.rsplit(".", 1)[0]
        regions = entry.get("regions", [])
        if isinstance(regions, dict):
            regions = list(regions.values())
        instances = result.setdefault(image_id, [])
        for region in regions:
            shape = region.get("shape_attributes", {})
            if shape.get("name") not in ("polygon", "polyline"):
                continue
            attributes = region.get("region_attributes", {})
            class_name = attributes.get(class_key)
            if isinstance(class_name, dict):
                # checkbox-style attributes: {"Dentin": true}
                class_name = next((k for k, v in class_name.items() if v), None)
            if not class_name:
                raise DataValidationError(
                    f"{image_id}: region without a '{class_key}' attribute"
                )
            vertices = tuple(zip(shape.get("all_points_x", []), shape.get("all_points_y", [])))
            instances.append(PolygonInstance(class_name, vertices, image_id))
    return result
