"""Light augmentation: identical geometry for image and targets, photometry on the image only."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import torch
import torchvision.transforms.functional as TF
from pydantic import BaseModel, ConfigDict
from torchvision.transforms import InterpolationMode

from hier_config import AUGMENTATION_DEFAULTS
from hierarchy import ClassTree


class AugmentationConfig(BaseModel):
    """Augmentation parameter ranges. Neutral values switch an operation off."""

    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    blur_kernel: Tuple[int, int] = AUGMENTATION_DEFAULTS["blur_kernel"]
    blur_sigma: Tuple[float, float] = AUGMENTATION_DEFAULTS["blur_sigma"]
    brightness: float = AUGMENTATION_DEFAULTS["brightness"]
    contrast: float = AUGMENTATION_DEFAULTS["contrast"]
    saturation: float = AUGMENTATION_DEFAULTS["saturation"]
    hue: float = AUGMENTATION_DEFAULTS["hue"]
    hflip_p: float = AUGMENTATION_DEFAULTS["hflip_p"]
    affine_p: float = AUGMENTATION_DEFAULTS["affine_p"]
    rotation: Tuple[float, float] = AUGMENTATION_DEFAULTS["rotation"]
    translate: Tuple[float, float] = AUGMENTATION_DEFAULTS["translate"]
    scale: Tuple[float, float] = AUGMENTATION_DEFAULTS["scale"]
    shear: Tuple[float, float] = AUGMENTATION_DEFAULTS["shear"]

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(
            blur_kernel=(0, 0), blur_sigma=(0.0, 0.0), brightness=0.0, contrast=0.0,
            saturation=0.0, hue=0.0, hflip_p=0.0, affine_p=0.0, rotation=(0.0, 0.0),
            translate=(0.0, 0.0), scale=(1.0, 1.0), shear=(0.0, 0.0),
        )


def target_fill_values(tree: ClassTree) -> List[List[float]]:
    """Fill for regions exposed by the affine warp: Background at level 0, -1 below."""
    fills = []
    for level, names in enumerate(tree.levels):
        if level == 0:
            fills.append([1.0 if name == tree.background else 0.0 for name in names])
        else:
            fills.append([-1.0] * len(names))
    return fills


def flat_fill_values(tree: ClassTree) -> List[float]:
    return [1.0 if name == tree.background else 0.0 for name in tree.flat_classes]


def _uniform(generator: torch.Generator, low: float, high: float) -> float:
    return float(low + (high - low) * torch.rand((), generator=generator, dtype=torch.float64).item())


def _chance(generator: torch.Generator, p: float) -> bool:
    return torch.rand((), generator=generator, dtype=torch.float64).item() < p


def augment(
    image: torch.Tensor,
    targets: Sequence[torch.Tensor],
    config: AugmentationConfig,
    rng: torch.Generator,
    fills: Optional[Sequence[Sequence[float]]] = None,
) -> Tuple[torch.Tensor, List[torch.Tensor]]:
    """Augment a ``1×H×W`` image and its ``C×H×W`` target planes.

    ``fills`` gives, per target tensor, the per-channel value written into regions the
    affine warp exposes; it defaults to 0 for the first tensor and -1 for the rest.
    """
    targets = list(targets)
    if not config.enabled:
        return image, targets
    if fills is None:
        fills = [[0.0] * t.shape[0] if i == 0 else [-1.0] * t.shape[0] for i, t in enumerate(targets)]

    # geometry: horizontal flip only, never vertical
    if config.hflip_p > 0 and _chance(rng, config.hflip_p):
        image = TF.hflip(image)
        targets = [TF.hflip(t) for t in targets]

    if config.affine_p > 0 and _chance(rng, config.affine_p):
        angle = _uniform(rng, *config.rotation)
        tx = int(round(_uniform(rng, -config.translate[0], config.translate[0])))
        ty = int(round(_uniform(rng, -config.translate[1], config.translate[1])))
        scale = _uniform(rng, *config.scale)
        shear = _uniform(rng, *config.shear)
        params = dict(angle=angle, translate=[tx, ty], scale=scale, shear=[shear, 0.0])
        image = TF.affine(image, interpolation=InterpolationMode.BILINEAR, fill=[0.0], **params)
        warped = []
        for plane, fill in zip(targets, fills):
            dtype = plane.dtype
            out = TF.affine(
                plane.float(), interpolation=InterpolationMode.NEAREST, fill=list(fill), **params
            )
            warped.append(out.round().to(dtype))
        targets = warped

    # photometry: image only
    if config.brightness > 0:
        image = TF.adjust_brightness(
            image, _uniform(rng, max(0.0, 1 - config.brightness), 1 + config.brightness)
        )
    if config.contrast > 0:
        image = TF.adjust_contrast(
            image, _uniform(rng, max(0.0, 1 - config.contrast), 1 + config.contrast)
        )
    # saturation and hue leave single-channel images untouched
    if config.saturation > 0:
        image = TF.adjust_saturation(
            image, _uniform(rng, max(0.0, 1 - config.saturation), 1 + config.saturation)
        )
    if config.hue > 0:
        image = TF.adjust_hue(image, _uniform(rng, -config.hue, config.hue))
    if min(config.blur_kernel) > 0 and config.blur_sigma[1] > 0:
        sigma = _uniform(rng, *config.blur_sigma)
        # reflect padding needs kernel // 2 < side
        limit = 2 * min(image.shape[-2:]) - 1
        kernel = [min(k, limit) for k in config.blur_kernel]
        image = TF.gaussian_blur(image, kernel_size=kernel, sigma=[sigma, sigma])

    return image.clamp(0.0, 1.0), targets
