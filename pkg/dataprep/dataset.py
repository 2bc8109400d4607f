"""Prepared dataset layout and the torch ``Dataset`` feeding training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from hierarchy import ClassTree, load_class_tree
from utils.errors import DataValidationError
from utils.seeding import torch_generator

from .annotations import SemanticMask
from .augment import AugmentationConfig, augment, flat_fill_values, target_fill_values
from .targets import flat_targets, mask_to_hier_targets


@dataclass(frozen=True)
class DatasetPaths:
    """File locations of a prepared dataset rooted at ``root``."""

    root: Path

    @property
    def class_map(self) -> Path:
        return self.root / "class_map.csv"

    @property
    def class_tree(self) -> Path:
        return self.root / "class_tree.json"

    @property
    def images(self) -> Path:
        return self.root / "images"

    @property
    def masks(self) -> Path:
        return self.root / "masks"

    @property
    def folds(self) -> Path:
        return self.root / "folds.csv"

    @property
    def weights(self) -> Path:
        return self.root / "class_weights.json"

    def image_path(self, image_id: str) -> Path:
        return self.images / f"{image_id}.png"

    def mask_path(self, image_id: str) -> Path:
        return self.masks / f"{image_id}.png"

    def image_ids(self) -> List[str]:
        return sorted(p.stem for p in self.masks.glob("*.png"))

    def load_tree(self) -> ClassTree:
        for path in (self.class_map, self.class_tree):
            if not path.exists():
                raise DataValidationError(f"prepared dataset is missing {path}")
        return load_class_tree(self.class_tree, self.class_map)


def read_image(path) -> np.ndarray:
    """8-bit grayscale image as an H×W uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)


def read_mask(path) -> SemanticMask:
    with Image.open(path) as img:
        if img.mode not in ("L", "P", "I", "I;16"):
            raise DataValidationError(f"{path}: masks must be single-channel, got mode {img.mode}")
        return SemanticMask(np.asarray(img, dtype=np.uint8))


def write_mask(mask: SemanticMask, path) -> None:
    Image.fromarray(mask.data.astype(np.uint8)).save(path, format="PNG", compress_level=0)


def write_image(image: np.ndarray, path) -> None:
    Image.fromarray(image.astype(np.uint8)).save(path, format="PNG")


def resize_pair(image: np.ndarray, mask: np.ndarray, size: Optional[int]):
    """Resize to ``size``×``size``: bilinear for the image, nearest for the mask."""
    if size is None or image.shape == (size, size):
        return image, mask
    image = np.asarray(Image.fromarray(image).resize((size, size), Image.BILINEAR))
    mask = np.asarray(Image.fromarray(mask).resize((size, size), Image.NEAREST))
    return image, mask


class HierSegDataset(Dataset):
    """Yields image tensors with hierarchical and flat targets for a list of image ids.

    Each item is a dict with ``image`` (1×H×W float in [0, 1]), ``targets`` (tuple of
    per-level C_l×H×W float tensors in {0, 1, -1}), ``flat`` (L×H×W one-hot leaf targets)
    and ``image_id``. With augmentation, item ``i`` of epoch ``e`` draws from its own
    generator stream so results do not depend on worker scheduling.
    """

    def __init__(
        self,
        paths: DatasetPaths,
        image_ids: Sequence[str],
        tree: ClassTree,
        image_size: Optional[int] = None,
        augmentation: Optional[AugmentationConfig] = None,
        seed: int = 0,
    ):
        self.paths = paths
        self.image_ids = list(image_ids)
        self.tree = tree
        self.image_size = image_size
        self.augmentation = augmentation
        self.seed = seed
        self.epoch = 0
        self._fills = target_fill_values(tree) + [flat_fill_values(tree)]
        missing = [i for i in self.image_ids if not paths.image_path(i).exists()]
        if missing:
            raise DataValidationError(f"images missing from {paths.images}: {missing[:5]}")

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.image_ids)

    def __getitem__(self, index: int) -> Dict[str, object]:
        image_id = self.image_ids[index]
        image = read_image(self.paths.image_path(image_id))
        mask = read_mask(self.paths.mask_path(image_id)).data
        image, mask = resize_pair(image, mask, self.image_size)

        stack = mask_to_hier_targets(mask, self.tree)
        planes = list(stack.to_tensors())
        planes.append(torch.from_numpy(flat_targets(mask, self.tree).astype(np.float32)))
        image_t = torch.from_numpy(image.astype(np.float32) / 255.0).unsqueeze(0)

        if self.augmentation is not None and self.augmentation.enabled:
            generator = torch_generator(self.seed, "augment", self.epoch, image_id)
            image_t, planes = augment(image_t, planes, self.augmentation, generator, self._fills)

        return {
            "image": image_t,
            "targets": tuple(planes[:-1]),
            "flat": planes[-1],
            "image_id": image_id,
        }
