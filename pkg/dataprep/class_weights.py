"""Inverse median frequency class weights and per-class dataset statistics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from hierarchy import ClassTree

from .annotations import SemanticMask
from .targets import OUTSIDE_PARENT, HierTargetStack, class_membership

logger = logging.getLogger(__name__)


@dataclass
class LossWeights:
    """Per-level weight vectors (one entry per class of the level)."""

    levels: Tuple[np.ndarray, ...]

    def __post_init__(self):
        self.levels = tuple(np.asarray(w, dtype=np.float64) for w in self.levels)
        for index, weights in enumerate(self.levels):
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise ValueError(f"level {index} weights must be finite and positive, got {weights}")

    @classmethod
    def uniform(cls, sizes: Sequence[int]) -> "LossWeights":
        return cls(tuple(np.ones(n) for n in sizes))

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(tuple(w * factor for w in self.levels))

    def to_list(self) -> List[List[float]]:
        return [w.tolist() for w in self.levels]


def inverse_median_frequency(counts: np.ndarray, totals: np.ndarray, label: str = "") -> np.ndarray:
    """w_c = median(freq) / freq_c with freq_c = counts_c / totals_c."""
    counts = np.asarray(counts, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    freq = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    if np.all(freq == 0):
        logger.warning("%s: no positive pixels for any class; using uniform weights", label or "weights")
        return np.ones_like(freq)
    zero = freq == 0
    if zero.any():
        smallest = freq[~zero].min()
        logger.warning(
            "%s: classes %s have zero frequency; substituting the smallest nonzero frequency %.6g",
            label or "weights", np.flatnonzero(zero).tolist(), smallest,
        )
        freq = np.where(zero, smallest, freq)
    return np.median(freq) / freq


def compute_class_weights(targets: Iterable[HierTargetStack], tree: ClassTree) -> LossWeights:
    """Per-level inverse median frequency over pixels whose target is not -1."""
    counts = [np.zeros(len(names)) for names in tree.levels]
    totals = [np.zeros(len(names)) for names in tree.levels]
    seen = False
    for stack in targets:
        seen = True
        for level, plane in enumerate(stack.planes):
            flat = plane.reshape(plane.shape[0], -1)
            counts[level] += (flat == 1).sum(axis=1)
            totals[level] += (flat != OUTSIDE_PARENT).sum(axis=1)
    if not seen:
        raise ValueError("cannot compute class weights from an empty training split")
    return LossWeights(
        tuple(
            inverse_median_frequency(c, t, label=f"level {lvl}")
            for lvl, (c, t) in enumerate(zip(counts, totals))
        )
    )


def compute_flat_class_weights(flat_planes: Iterable[np.ndarray]) -> np.ndarray:
    """Inverse median frequency over the flat (leaf) output set."""
    counts = None
    total = 0
    for planes in flat_planes:
        flat = planes.reshape(planes.shape[0], -1)
        counts = flat.sum(axis=1).astype(np.float64) if counts is None else counts + flat.sum(axis=1)
        total += flat.shape[1]
    if counts is None:
        raise ValueError("cannot compute class weights from an empty training split")
    return inverse_median_frequency(counts, np.full_like(counts, total), label="flat")


def save_class_weights(path, hierarchical: LossWeights, flat: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"hierarchical": hierarchical.to_list(), "flat": np.asarray(flat).tolist()}, f, indent=2)
        f.write("\n")


def class_statistics(
    masks: Iterable[Union[SemanticMask, np.ndarray]], tree: ClassTree
) -> Dict[str, Dict[str, float]]:
    """Instance counts (8-connected components) and mean pixels per image for every class.

    Parent classes are evaluated as the union of their descendants.
    """
    structure = np.ones((3, 3), dtype=bool)
    stats = {name: {"instances": 0, "pixels": 0} for name in tree.names}
    n_images = 0
    for mask in masks:
        n_images += 1
        for name in tree.names:
            member = class_membership(mask, tree, name)
            stats[name]["pixels"] += int(member.sum())
            if name != tree.background:
                stats[name]["instances"] += int(ndimage.label(member, structure=structure)[1])
    return {
        name: {
            "pixel_value": tree.node(name).pixel_value,
            "instances": values["instances"],
            "pixels_per_image": values["pixels"] / n_images if n_images else 0.0,
        }
        for name, values in stats.items()
    }


def format_class_statistics(stats: Dict[str, Dict[str, float]]) -> str:
    """Render class statistics as a fixed-width table."""
    lines = [f"{'Class':<14}{'Value':>7}{'Instances':>11}{'Pixel P/Img':>15}", "-" * 47]
    for name, row in stats.items():
        value = "-" if row["pixel_value"] is None else str(row["pixel_value"])
        lines.append(f"{name:<14}{value:>7}{row['instances']:>11,}{row['pixels_per_image']:>15,.0f}")
    return "\n".join(lines)
