"""Hierarchical target synthesis.

Parent classes are not stored in masks: a parent plane is the union of its
descendants. Child planes carry -1 wherever the direct parent plane is 0 so the
loss can ignore pixels outside the parent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import torch

from hierarchy import ClassTree

from .annotations import SemanticMask

OUTSIDE_PARENT = -1


@dataclass
class HierTargetStack:
    """Per-level target planes (C_l × H × W, values in {0, 1, -1})."""

    planes: Tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.planes)

    def level(self, level: int) -> np.ndarray:
        return self.planes[level]

    def visibility(self, level: int) -> np.ndarray:
        """Parent visibility map m: 1 where the pixel counts for the class's loss."""
        return (self.planes[level] != OUTSIDE_PARENT).astype(np.uint8)

    def to_tensors(self) -> Tuple[torch.Tensor, ...]:
        return tuple(torch.from_numpy(plane.astype(np.float32)) for plane in self.planes)


def _mask_array(mask: Union[SemanticMask, np.ndarray]) -> np.ndarray:
    return mask.data if isinstance(mask, SemanticMask) else np.asarray(mask)


def class_membership(mask: Union[SemanticMask, np.ndarray], tree: ClassTree, name: str) -> np.ndarray:
    """Boolean plane of pixels belonging to ``name`` or any of its descendants."""
    return np.isin(_mask_array(mask), tree.descendant_values(name))


def mask_to_hier_targets(mask: Union[SemanticMask, np.ndarray], tree: ClassTree) -> HierTargetStack:
    """Build the per-level {0, 1, -1} target stack for one mask."""
    data = _mask_array(mask)
    membership = {name: class_membership(data, tree, name) for name in tree.names}

    planes = []
    for level, names in enumerate(tree.levels):
        plane = np.zeros((len(names),) + data.shape, dtype=np.int8)
        for index, name in enumerate(names):
            member = membership[name]
            if level == 0:
                plane[index] = member
            else:
                inside = membership[tree.parent_of(name)]
                plane[index] = np.where(inside, member, OUTSIDE_PARENT)
        planes.append(plane)
    return HierTargetStack(tuple(planes))


def hier_targets_to_mask(stack: HierTargetStack, tree: ClassTree) -> SemanticMask:
    """Inverse of ``mask_to_hier_targets``: deepest positive stored class wins."""
    shape = stack.planes[0].shape[1:]
    background = tree.background
    fill = tree.node(background).pixel_value if background is not None else 0
    data = np.full(shape, fill, dtype=np.uint8)
    for level, names in enumerate(tree.levels):
        for index, name in enumerate(names):
            value = tree.node(name).pixel_value
            if value is None:
                continue
            data[stack.planes[level][index] == 1] = value
    return SemanticMask(data)


def flat_targets(mask: Union[SemanticMask, np.ndarray], tree: ClassTree) -> np.ndarray:
    """One-hot targets over the leaf classes (flat baseline), shape L × H × W."""
    data = _mask_array(mask)
    leaves = tree.flat_classes
    planes = np.zeros((len(leaves),) + data.shape, dtype=np.int8)
    for index, name in enumerate(leaves):
        planes[index] = data == tree.node(name).pixel_value
    return planes


def full_class_targets(stack: HierTargetStack, tree: ClassTree) -> np.ndarray:
    """All classes in tree order as binary planes, -1 entries converted to 0 for evaluation."""
    planes: List[np.ndarray] = []
    for level_plane in stack.planes:
        planes.extend(level_plane)
    full = np.stack(planes, axis=0)
    return (full == 1).astype(np.uint8)
