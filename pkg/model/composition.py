"""Probability composition across hierarchy levels.

Root classes get independent sigmoids. Each parent's child group gets a softmax over
logits shifted by ``log(P(parent) + eps)`` (the conditional distribution Q), and the
absolute child probability is ``P(parent) * Q``. Restriction then removes child
predictions where the parent is not positively predicted.

All tensors are ``B × C × H × W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch

from hier_config import COMPOSITION_EPS, RESTRICT_THRESHOLD, RESTRICTED_LOGIT
from hierarchy import ClassTree


@dataclass(frozen=True)
class LevelGroups:
    """Index bookkeeping for one non-root level."""

    parent_index: Tuple[int, ...]                          # per child: index in level - 1
    groups: Tuple[Tuple[int, Tuple[int, ...]], ...]        # (parent index, child indices)

    @classmethod
    def from_tree(cls, tree: ClassTree, level: int) -> "LevelGroups":
        parent_index = tuple(tree.parent_index(level))
        children = tree.levels[level]
        parents = tree.levels[level - 1]
        groups = tuple(
            (parents.index(parent), tuple(children.index(c) for c in members))
            for parent, members in tree.parent_groups[level - 1].items()
        )
        return cls(parent_index=parent_index, groups=groups)


@dataclass
class ProbPyramid:
    """Per-level logits and probabilities for a batch of images.

    ``probs`` are the composed absolute probabilities (child ≤ parent, children sum to the
    parent); ``restricted_*`` are the same maps after parent gating.
    """

    logits: List[torch.Tensor]
    probs: List[torch.Tensor]
    conditionals: List[Optional[torch.Tensor]]
    restricted_logits: List[torch.Tensor]
    restricted_probs: List[torch.Tensor]
    eps: float = COMPOSITION_EPS
    restriction_masks: List[Optional[torch.Tensor]] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.probs)


def root_activation(z0: torch.Tensor) -> torch.Tensor:
    """Element-wise sigmoid; root classes are not normalized against each other."""
    return torch.sigmoid(z0)


def conditional_softmax(
    z: torch.Tensor, parent_probs: torch.Tensor, eps: float = COMPOSITION_EPS
) -> torch.Tensor:
    """Softmax over one parent's child group with logits shifted by ``log(P_parent + eps)``.

    ``z`` is ``B × |C_p| × H × W``; ``parent_probs`` is ``B × 1 × H × W`` (or ``B × H × W``).
    """
    if parent_probs.dim() == z.dim() - 1:
        parent_probs = parent_probs.unsqueeze(1)
    return torch.softmax(z + torch.log(parent_probs + eps), dim=1)


def compose(q: torch.Tensor, parent_probs: torch.Tensor) -> torch.Tensor:
    """Absolute child probabilities ``P_parent × Q``."""
    if parent_probs.dim() == q.dim() - 1:
        parent_probs = parent_probs.unsqueeze(1)
    return parent_probs * q


def expand_parents(parent_level: torch.Tensor, parent_index: Sequence[int]) -> torch.Tensor:
    """Gather each child's parent plane: ``B × C_{l-1} × H × W`` → ``B × C_l × H × W``."""
    index = torch.as_tensor(list(parent_index), dtype=torch.long, device=parent_level.device)
    return parent_level.index_select(1, index)


def restrict(
    values: torch.Tensor,
    parent_probs: torch.Tensor,
    threshold: float = RESTRICT_THRESHOLD,
    fill: float = 0.0,
) -> torch.Tensor:
    """Replace ``values`` by ``fill`` wherever the (per-child) parent probability < threshold."""
    return torch.where(parent_probs >= threshold, values, torch.full_like(values, fill))


def restrict_logits(
    logits: torch.Tensor, parent_probs: torch.Tensor, threshold: float = RESTRICT_THRESHOLD
) -> torch.Tensor:
    return restrict(logits, parent_probs, threshold, fill=RESTRICTED_LOGIT)


def compose_level(
    z: torch.Tensor,
    parent_level_probs: torch.Tensor,
    groups: LevelGroups,
    eps: float = COMPOSITION_EPS,
    level_wide: bool = False,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Conditional distributions Q and absolute probabilities P for one non-root level.

    With ``level_wide`` the shifted logits are normalized across the whole level instead of
    per parent group; the product rule is unchanged.
    """
    parents = expand_parents(parent_level_probs, groups.parent_index)
    if level_wide:
        q = torch.softmax(z + torch.log(parents + eps), dim=1)
        return q, parents * q

    pieces, order = [], []
    for parent, children in groups.groups:
        index = torch.as_tensor(children, dtype=torch.long, device=z.device)
        parent_plane = parent_level_probs[:, parent : parent + 1]
        pieces.append(conditional_softmax(z.index_select(1, index), parent_plane, eps))
        order.extend(children)
    inverse = torch.as_tensor(
        sorted(range(len(order)), key=order.__getitem__), dtype=torch.long, device=z.device
    )
    q = torch.cat(pieces, dim=1).index_select(1, inverse)
    return q, compose(q, parents)
