"""Colour overlays of predicted class masks on the grayscale input."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from hier_config import OVERLAY_ALPHA, OVERLAY_PALETTE, PRIORITY_ORDER
from hierarchy import ClassTree
from utils.errors import ConfigError

Palette = Dict[str, Tuple[int, int, int]]


def load_palette(path=None) -> Palette:
    """Default palette, optionally updated from a JSON file ``{"Class": [r, g, b]}``."""
    palette: Palette = dict(OVERLAY_PALETTE)
    if path is None:
        return palette
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"palette file {path} must hold a JSON object")
    for name, colour in raw.items():
        if not (isinstance(colour, (list, tuple)) and len(colour) == 3 and all(0 <= int(c) <= 255 for c in colour)):
            raise ConfigError(f"palette entry for '{name}' must be three 0-255 integers, got {colour}")
        palette[name] = tuple(int(c) for c in colour)
    return palette


def resolve_labels(
    masks: np.ndarray,
    tree: ClassTree,
    palette: Mapping[str, Tuple[int, int, int]],
    priority: Optional[Sequence[Sequence[str]]] = None,
) -> np.ndarray:
    """Single label per pixel (index into ``tree.names``, -1 for none).

    Only classes with a colour are painted. Classes are painted from lowest to highest
    priority so a multi-positive pixel keeps the highest-priority class.
    """
    priority = PRIORITY_ORDER if priority is None else priority
    rank = {name: tier for tier, names in enumerate(priority) for name in names}
    names = list(tree.names)
    painted = [n for n in names if n in palette]
    # unranked classes go below every ranked tier, deeper levels above shallower ones
    painted.sort(key=lambda n: (-rank.get(n, len(priority)), tree.level_of(n)))
    labels = np.full(masks.shape[-2:], -1, dtype=np.int32)
    for name in painted:
        labels[masks[names.index(name)].astype(bool)] = names.index(name)
    return labels


def render_overlay(
    image: np.ndarray,
    masks: np.ndarray,
    tree: ClassTree,
    palette: Optional[Mapping[str, Tuple[int, int, int]]] = None,
    alpha: float = OVERLAY_ALPHA,
    priority: Optional[Sequence[Sequence[str]]] = None,
) -> Image.Image:
    """Blend class colours into a uint8 grayscale ``H × W`` image; unlabelled pixels stay grey."""
    palette = OVERLAY_PALETTE if palette is None else palette
    gray = np.asarray(image, dtype=np.float64)
    rgb = np.repeat(gray[..., None], 3, axis=-1)
    labels = resolve_labels(masks, tree, palette, priority)
    names = list(tree.names)
    for index in np.unique(labels):
        if index < 0:
            continue
        where = labels == index
        colour = np.asarray(palette[names[index]], dtype=np.float64)
        rgb[where] = (1.0 - alpha) * rgb[where] + alpha * colour
    return Image.fromarray(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))


def save_overlay(overlay: Image.Image, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    overlay.save(path, format="PNG", compress_level=0)
    return path
