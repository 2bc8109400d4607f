"""Weighted hierarchical Dice / cross-entropy, the consistency penalty and the total objective.

Target planes hold {0, 1, -1}; -1 marks pixels outside the class's direct parent. Those
pixels are removed from every sum through the visibility map ``m = (y != -1)`` and the
target itself is read as 0 there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from hier_config import CE_CLAMP, DICE_EPS
from hierarchy import ClassTree

from .composition import LevelGroups, ProbPyramid

WeightsLike = Union[Sequence[Sequence[float]], Sequence[np.ndarray], Sequence[torch.Tensor]]


class LossConfig(BaseModel):
    """Loss options; defaults follow the literal objective."""

    model_config = ConfigDict(extra="forbid")

    dice_eps: float = Field(default=DICE_EPS, ge=0.0)
    ce_clamp: float = Field(default=CE_CLAMP, gt=0.0, lt=1.0)
    ce_reduction: Literal["sum", "mean"] = "sum"
    binary_ce: bool = False
    consistency_input: Literal["restricted", "composed"] = "restricted"
    consistency_weight: float = Field(default=1.0, ge=0.0)


@dataclass
class LevelLoss:
    dice: torch.Tensor
    ce: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.dice + self.ce


@dataclass
class LossBreakdown:
    """Per-level Dice and CE terms, the consistency term and their sum."""

    levels: List[LevelLoss]
    consistency: torch.Tensor
    total: torch.Tensor = field(init=False)

    def __post_init__(self):
        self.total = total_loss(self.whl, self.consistency)

    @property
    def whl(self) -> torch.Tensor:
        return sum((level.total for level in self.levels), torch.zeros_like(self.consistency))

    def as_dict(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for index, level in enumerate(self.levels):
            out[f"dice_l{index}"] = float(level.dice.detach())
            out[f"ce_l{index}"] = float(level.ce.detach())
        out["consistency"] = float(self.consistency.detach())
        out["total"] = float(self.total.detach())
        return out


def visibility_map(y: torch.Tensor) -> torch.Tensor:
    """1 where the target is defined (not -1), else 0."""
    return (y != -1).to(y.dtype if y.is_floating_point() else torch.float32)


def _class_weights(w, reference: torch.Tensor) -> torch.Tensor:
    channels = reference.shape[1]
    if w is None:
        return torch.ones(channels, dtype=reference.dtype, device=reference.device)
    weights = torch.as_tensor(np.asarray(w) if not torch.is_tensor(w) else w)
    weights = weights.to(dtype=reference.dtype, device=reference.device).reshape(-1)
    if weights.numel() != channels:
        raise ValueError(f"expected {channels} class weights, got {weights.numel()}")
    return weights


def _prepare(P: torch.Tensor, y: torch.Tensor, m: Optional[torch.Tensor]):
    if P.shape != y.shape:
        raise ValueError(f"probabilities {tuple(P.shape)} and targets {tuple(y.shape)} differ")
    y = y.to(P.dtype)
    if m is None:
        m = visibility_map(y)
    m = m.to(P.dtype)
    return y.clamp(min=0.0) * m, m


def _per_class_sum(x: torch.Tensor) -> torch.Tensor:
    """Sum over batch and pixels, keeping the class axis of a ``B × C × H × W`` tensor."""
    return x.transpose(0, 1).reshape(x.shape[1], -1).sum(dim=1)


def hier_dice(
    P: torch.Tensor,
    y: torch.Tensor,
    m: Optional[torch.Tensor] = None,
    w=None,
    eps: float = DICE_EPS,
) -> torch.Tensor:
    """``1 - mean_c (2 Σ m w y P + eps) / (Σ m w (y + P) + eps)``."""
    y, m = _prepare(P, y, m)
    weights = _class_weights(w, P).view(1, -1, 1, 1)
    numerator = 2.0 * _per_class_sum(m * weights * y * P) + eps
    denominator = _per_class_sum(m * weights * (y + P)) + eps
    return 1.0 - (numerator / denominator).mean()


def hier_ce(
    P: torch.Tensor,
    y: torch.Tensor,
    m: Optional[torch.Tensor] = None,
    w=None,
    clamp: float = CE_CLAMP,
    reduction: str = "sum",
    binary: bool = False,
) -> torch.Tensor:
    """``-(1/C) Σ_c Σ_x m w y log P``; ``binary`` adds the ``(1 - y) log(1 - P)`` term.

    ``reduction="mean"`` divides each class sum by its number of visible pixels.
    """
    y, m = _prepare(P, y, m)
    weights = _class_weights(w, P).view(1, -1, 1, 1)
    log_p = torch.log(P.clamp(min=clamp, max=1.0))
    per_pixel = y * log_p
    if binary:
        per_pixel = per_pixel + m * (1.0 - y) * torch.log((1.0 - P).clamp(min=clamp, max=1.0))
    per_class = -_per_class_sum(m * weights * per_pixel)
    if reduction == "mean":
        per_class = per_class / _per_class_sum(m).clamp(min=1.0)
    elif reduction != "sum":
        raise ValueError(f"Unknown CE reduction '{reduction}'")
    return per_class.mean()


def whl(
    probs: Union[ProbPyramid, Sequence[torch.Tensor]],
    targets: Sequence[torch.Tensor],
    weights: WeightsLike,
    config: Optional[LossConfig] = None,
) -> List[LevelLoss]:
    """Weighted hierarchical Dice + CE per level, on the composed (unrestricted) probabilities."""
    config = config or LossConfig()
    levels = list(probs.probs if isinstance(probs, ProbPyramid) else probs)
    weights = list(getattr(weights, "levels", weights))
    if not (len(levels) == len(targets) == len(weights)):
        raise ValueError(
            f"level mismatch: {len(levels)} probability levels, {len(targets)} target levels, "
            f"{len(weights)} weight vectors"
        )
    out = []
    for P, y, w in zip(levels, targets, weights):
        m = visibility_map(y)
        out.append(
            LevelLoss(
                dice=hier_dice(P, y, m, w, eps=config.dice_eps),
                ce=hier_ce(
                    P, y, m, w,
                    clamp=config.ce_clamp,
                    reduction=config.ce_reduction,
                    binary=config.binary_ce,
                ),
            )
        )
    return out


def consistency_loss(
    pyramid: ProbPyramid, tree: ClassTree, source: str = "restricted"
) -> torch.Tensor:
    """Mean |Σ children - parent| per parent (averaged over batch and pixels), divided by NP."""
    if source == "restricted":
        levels = pyramid.restricted_probs
    elif source == "composed":
        levels = pyramid.probs
    else:
        raise ValueError(f"Unknown consistency input '{source}'")

    reference = levels[0]
    total = torch.zeros((), dtype=reference.dtype, device=reference.device)
    n_parents = 0
    for level in range(1, len(levels)):
        groups = LevelGroups.from_tree(tree, level)
        for parent, children in groups.groups:
            index = torch.as_tensor(children, dtype=torch.long, device=reference.device)
            child_sum = levels[level].index_select(1, index).sum(dim=1)
            gap = (child_sum - levels[level - 1][:, parent]).abs()
            total = total + gap.mean()
            n_parents += 1
    if n_parents == 0:
        return total
    return total / n_parents


def total_loss(whl_value: torch.Tensor, hc: torch.Tensor) -> torch.Tensor:
    return whl_value + hc


def hierarchical_loss(
    pyramid: ProbPyramid,
    targets: Sequence[torch.Tensor],
    weights: WeightsLike,
    tree: ClassTree,
    config: Optional[LossConfig] = None,
) -> LossBreakdown:
    """Full training objective for a hierarchical model."""
    config = config or LossConfig()
    levels = whl(pyramid, targets, weights, config)
    hc = consistency_loss(pyramid, tree, config.consistency_input) * config.consistency_weight
    return LossBreakdown(levels=levels, consistency=hc)


def flat_loss(
    probs: torch.Tensor,
    targets: torch.Tensor,
    weights=None,
    config: Optional[LossConfig] = None,
) -> LossBreakdown:
    """Weighted Dice + CE over the leaf classes of a flat baseline (visibility 1 everywhere)."""
    config = config or LossConfig()
    level = whl([probs], [targets], [weights if weights is not None else None], config)
    return LossBreakdown(levels=level, consistency=torch.zeros((), dtype=probs.dtype, device=probs.device))
