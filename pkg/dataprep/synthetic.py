"""Synthetic two-level datasets: rectangular blobs split into child strips.

Each class has its own intensity band, so the task is learnable by a tiny backbone
while still exercising the full hierarchical pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from hierarchy import ClassTree, parse_class_tree, save_class_tree
from utils.seeding import numpy_generator

from .annotations import SemanticMask
from .dataset import DatasetPaths, write_image, write_mask

BACKGROUND_LEVEL = 0.1
BAND_HALF_WIDTH = 0.03
PARENT_NAME = "Blob"


class SyntheticSpec(BaseModel):
    """Parameters of a synthetic dataset."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(64, ge=16)
    n_images: int = Field(20, ge=1)
    shapes: Tuple[int, int] = (1, 3)      # min / max blobs per image
    n_children: int = Field(3, ge=1, le=4)
    noise: float = Field(0.02, ge=0.0)
    seed: int = 0

    def child_names(self) -> List[str]:
        return [f"Part{i + 1}" for i in range(self.n_children)]

    def band_centers(self) -> np.ndarray:
        """Intensity centre per mask value: background, blob (never stored), children."""
        n = self.n_children
        children = [0.35 + 0.6 * i / max(n, 1) for i in range(n)]
        return np.array([BACKGROUND_LEVEL, np.nan] + children)


@dataclass
class SyntheticDataset:
    image_ids: List[str]
    images: List[np.ndarray]       # uint8 H×W
    masks: List[SemanticMask]
    tree: ClassTree


def synthetic_tree(spec: SyntheticSpec) -> ClassTree:
    children = spec.child_names()
    nested = '{"Background": {}, "%s": {%s}}' % (
        PARENT_NAME, ", ".join(f'"{c}": {{}}' for c in children)
    )
    rows = ["Background,0", f"{PARENT_NAME},1"] + [f"{c},{i + 2}" for i, c in enumerate(children)]
    return parse_class_tree(nested, "\n".join(rows) + "\n")


def _draw_image(spec: SyntheticSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    size = spec.image_size
    n = spec.n_children
    centers = spec.band_centers()
    mask = np.zeros((size, size), dtype=np.uint8)
    intensity = np.full((size, size), BACKGROUND_LEVEL, dtype=np.float64)
    intensity += rng.uniform(-BAND_HALF_WIDTH, BAND_HALF_WIDTH)

    count = int(rng.integers(spec.shapes[0], spec.shapes[1] + 1))
    min_side = max(2 * n, size // 6)
    for _ in range(count):
        h = int(rng.integers(min_side, size // 2 + 1))
        w = int(rng.integers(min_side, size // 2 + 1))
        top = int(rng.integers(0, size - h + 1))
        left = int(rng.integers(0, size - w + 1))
        vertical = bool(rng.integers(0, 2))
        span = w if vertical else h
        edges = np.linspace(0, span, n + 1).round().astype(int)
        for child in range(n):
            a, b = edges[child], edges[child + 1]
            if vertical:
                region = (slice(top, top + h), slice(left + a, left + b))
            else:
                region = (slice(top + a, top + b), slice(left, left + w))
            mask[region] = child + 2
            intensity[region] = centers[child + 2] + rng.uniform(-BAND_HALF_WIDTH, BAND_HALF_WIDTH)

    if spec.noise > 0:
        intensity = intensity + rng.normal(0.0, spec.noise, size=intensity.shape)
    image = np.clip(np.round(intensity * 255.0), 0, 255).astype(np.uint8)
    return image, mask


def generate(spec: SyntheticSpec, out_dir: Optional[Path] = None) -> SyntheticDataset:
    """Generate ``spec.n_images`` image/mask pairs; write the prepared layout when ``out_dir`` is given."""
    tree = synthetic_tree(spec)
    ids, images, masks = [], [], []
    for index in range(spec.n_images):
        rng = numpy_generator(spec.seed, "synthetic", index)
        image, mask = _draw_image(spec, rng)
        ids.append(f"syn_{index:04d}")
        images.append(image)
        masks.append(SemanticMask(mask))

    if out_dir is not None:
        paths = DatasetPaths(Path(out_dir))
        paths.images.mkdir(parents=True, exist_ok=True)
        paths.masks.mkdir(parents=True, exist_ok=True)
        save_class_tree(tree, paths.class_tree, paths.class_map)
        for image_id, image, mask in zip(ids, images, masks):
            write_image(image, paths.image_path(image_id))
            write_mask(mask, paths.mask_path(image_id))

    return SyntheticDataset(ids, images, masks, tree)


def color_oracle(image: np.ndarray, spec: SyntheticSpec) -> SemanticMask:
    """Label each pixel with the class whose intensity band centre is nearest."""
    centers = spec.band_centers()
    values = np.array([0] + list(range(2, spec.n_children + 2)))
    bands = np.array([centers[0]] + list(centers[2:]))
    scaled = image.astype(np.float64) / 255.0
    nearest = np.abs(scaled[..., None] - bands[None, None, :]).argmin(axis=-1)
    return SemanticMask(values[nearest].astype(np.uint8))
