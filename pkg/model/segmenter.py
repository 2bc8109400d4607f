"""Hierarchical and flat segmenters around a shared backbone."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field

from hier_config import COMPOSITION_EPS, RESTRICT_THRESHOLD
from hierarchy import ClassTree
from utils.errors import ConfigError

from .backbones import BackboneFactory, BaseBackbone
from .composition import (
    LevelGroups,
    ProbPyramid,
    compose_level,
    expand_parents,
    restrict,
    restrict_logits,
    root_activation,
)
from .film import FiLMGenerator, film_condition

logger = logging.getLogger(__name__)


class ModelConfig(BaseModel):
    """Architecture options for ``build_model``."""

    model_config = ConfigDict(extra="forbid")

    hierarchical: bool = True
    backbone: str = "tiny"
    backbone_kwargs: Dict[str, Any] = Field(default_factory=dict)
    trunk_in_channels: int = Field(default=8, ge=1)
    film: bool = True
    film_hidden: Optional[int] = Field(default=None, ge=1)
    level_wide_softmax: bool = False
    eps: float = Field(default=COMPOSITION_EPS, gt=0.0)
    restrict_threshold: float = Field(default=RESTRICT_THRESHOLD, gt=0.0, lt=1.0)


@dataclass
class ForwardTrace:
    """Intermediate tensors of one hierarchical forward pass, one entry per level."""

    adapter_inputs: List[torch.Tensor] = field(default_factory=list)
    features: List[torch.Tensor] = field(default_factory=list)
    conditioned: List[torch.Tensor] = field(default_factory=list)
    logits: List[torch.Tensor] = field(default_factory=list)
    probs: List[torch.Tensor] = field(default_factory=list)
    restriction_masks: List[Optional[torch.Tensor]] = field(default_factory=list)


@dataclass
class FlatOutput:
    logits: torch.Tensor
    probs: torch.Tensor


class HierarchicalSegmenter(nn.Module):
    """Runs the shared trunk once per level.

    Level 0 sees the image alone; level l sees the image concatenated with the restricted
    level l-1 logits. Each level has its own 1×1 input adapter and 1×1 output head, and
    levels below the root modulate trunk features with a FiLM generator fed by the
    spatially pooled parent probabilities.
    """

    def __init__(
        self,
        backbone: BaseBackbone,
        tree: ClassTree,
        eps: float = COMPOSITION_EPS,
        restrict_threshold: float = RESTRICT_THRESHOLD,
        level_wide_softmax: bool = False,
        film: bool = True,
        film_hidden: Optional[int] = None,
    ):
        super().__init__()
        self.backbone = backbone
        self.tree = tree
        self.eps = eps
        self.restrict_threshold = restrict_threshold
        self.level_wide_softmax = level_wide_softmax
        self.use_film = film

        sizes = [len(names) for names in tree.levels]
        in_ch, feat = backbone.in_channels, backbone.feature_channels
        self.adapters = nn.ModuleList(
            nn.Conv2d(1 if level == 0 else 1 + sizes[level - 1], in_ch, kernel_size=1)
            for level in range(len(sizes))
        )
        self.heads = nn.ModuleList(nn.Conv2d(feat, n, kernel_size=1) for n in sizes)
        self.film = nn.ModuleList(
            FiLMGenerator(sizes[level - 1], feat, hidden=film_hidden) for level in range(1, len(sizes))
        ) if film else nn.ModuleList()
        self.groups = [None] + [LevelGroups.from_tree(tree, level) for level in range(1, len(sizes))]

    @property
    def depth(self) -> int:
        return len(self.heads)

    def forward(self, image: torch.Tensor) -> ProbPyramid:
        pyramid, _ = self.hier_forward(image)
        return pyramid

    def hier_forward(
        self, image: torch.Tensor, depth: Optional[int] = None, trace: bool = False
    ) -> Tuple[ProbPyramid, Optional[ForwardTrace]]:
        depth = self.depth if depth is None else depth
        if depth > self.depth or depth < 1:
            raise ValueError(f"model has heads for {self.depth} levels, cannot run {depth}")
        if image.dim() != 4 or image.shape[1] != 1:
            raise ValueError(f"expected a B×1×H×W image batch, got {tuple(image.shape)}")
        record = ForwardTrace() if trace else None

        logits: List[torch.Tensor] = []
        probs: List[torch.Tensor] = []
        conditionals: List[Optional[torch.Tensor]] = []
        r_logits: List[torch.Tensor] = []
        r_probs: List[torch.Tensor] = []
        masks: List[Optional[torch.Tensor]] = []

        for level in range(depth):
            if level == 0:
                adapter_in = image
            else:
                adapter_in = torch.cat([image, r_logits[-1]], dim=1)
            features = self.backbone(self.adapters[level](adapter_in))
            conditioned = features
            if level > 0 and self.use_film:
                conditioned = film_condition(features, probs[-1], self.film[level - 1])
            z = self.heads[level](conditioned)

            if level == 0:
                p = root_activation(z)
                q = None
                rz, rp, mask = z, p, None
            else:
                groups = self.groups[level]
                q, p = compose_level(z, probs[-1], groups, self.eps, self.level_wide_softmax)
                gate = expand_parents(r_probs[-1], groups.parent_index)
                mask = gate >= self.restrict_threshold
                rp = restrict(p, gate, self.restrict_threshold)
                rz = restrict_logits(z, gate, self.restrict_threshold)

            logits.append(z)
            probs.append(p)
            conditionals.append(q)
            r_logits.append(rz)
            r_probs.append(rp)
            masks.append(mask)
            if record is not None:
                record.adapter_inputs.append(adapter_in)
                record.features.append(features)
                record.conditioned.append(conditioned)
                record.logits.append(z)
                record.probs.append(p)
                record.restriction_masks.append(mask)

        pyramid = ProbPyramid(
            logits=logits,
            probs=probs,
            conditionals=conditionals,
            restricted_logits=r_logits,
            restricted_probs=r_probs,
            eps=self.eps,
            restriction_masks=masks,
        )
        return pyramid, record


class FlatSegmenter(nn.Module):
    """Single pass over the leaf classes with a softmax across them."""

    def __init__(self, backbone: BaseBackbone, tree: ClassTree):
        super().__init__()
        self.backbone = backbone
        self.tree = tree
        self.adapters = nn.ModuleList([nn.Conv2d(1, backbone.in_channels, kernel_size=1)])
        self.heads = nn.ModuleList([nn.Conv2d(backbone.feature_channels, len(tree.flat_classes), kernel_size=1)])

    def forward(self, image: torch.Tensor) -> FlatOutput:
        return self.baseline_forward(image)

    def baseline_forward(self, image: torch.Tensor) -> FlatOutput:
        if image.dim() != 4 or image.shape[1] != 1:
            raise ValueError(f"expected a B×1×H×W image batch, got {tuple(image.shape)}")
        logits = self.heads[0](self.backbone(self.adapters[0](image)))
        return FlatOutput(logits=logits, probs=torch.softmax(logits, dim=1))


Segmenter = Union[HierarchicalSegmenter, FlatSegmenter]


def build_model(config: ModelConfig, tree: ClassTree) -> Segmenter:
    kwargs = dict(config.backbone_kwargs)
    kwargs.setdefault("in_channels", config.trunk_in_channels)
    try:
        backbone = BackboneFactory.create_backbone(config.backbone, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build backbone '{config.backbone}' with {kwargs}: {exc}") from exc
    if not config.hierarchical:
        return FlatSegmenter(backbone, tree)
    return HierarchicalSegmenter(
        backbone,
        tree,
        eps=config.eps,
        restrict_threshold=config.restrict_threshold,
        level_wide_softmax=config.level_wide_softmax,
        film=config.film,
        film_hidden=config.film_hidden,
    )


def class_probabilities(output: Union[ProbPyramid, FlatOutput, torch.Tensor], tree: ClassTree) -> torch.Tensor:
    """Probabilities for every class in tree order, ``B × N × H × W``.

    Hierarchical outputs use the restricted absolute probabilities. Flat outputs map leaf
    channels directly and give each parent the sum of its leaf descendants.
    """
    if isinstance(output, ProbPyramid):
        return torch.cat(output.restricted_probs, dim=1)
    probs = output.probs if isinstance(output, FlatOutput) else output
    leaves = list(tree.flat_classes)
    planes = []
    for name in tree.names:
        if name in leaves:
            planes.append(probs[:, leaves.index(name)])
        else:
            members = [leaves.index(d) for d in tree.descendants(name) if d in leaves]
            planes.append(probs[:, members].sum(dim=1))
    return torch.stack(planes, dim=1)


def _count(module: Optional[nn.Module]) -> int:
    if module is None:
        return 0
    return sum(p.numel() for p in module.parameters())


def parameter_report(model: Segmenter) -> Dict[str, int]:
    """Parameter counts per component plus the wrapper overhead relative to the trunk."""
    report = {
        "trunk": _count(model.backbone),
        "adapters": _count(model.adapters),
        "heads": _count(model.heads),
        "film": _count(getattr(model, "film", None)),
    }
    report["overhead"] = report["adapters"] + report["heads"] + report["film"]
    report["total"] = report["trunk"] + report["overhead"]
    return report


def format_parameter_report(report: Dict[str, int]) -> str:
    trunk = report["trunk"]
    share = 100.0 * report["overhead"] / trunk if trunk else 0.0
    lines = [f"{key:<10}{value:>14,}" for key, value in report.items()]
    lines.append(f"{'overhead %':<10}{share:>14.3f}")
    return "\n".join(lines)
