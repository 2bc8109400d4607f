"""Feature-wise linear modulation driven by pooled parent-class probabilities."""

from __future__ import annotations

from typing import Optional, Tuple

import torch
import torch.nn as nn


class FiLMGenerator(nn.Module):
    """Two-layer perceptron: parent-probability summary (C_parent) -> (gamma, beta), each F.

    The last layer starts at zero so a fresh generator emits gamma = 1, beta = 0.
    """

    def __init__(self, parent_classes: int, feature_channels: int, hidden: Optional[int] = None):
        super().__init__()
        self.parent_classes = parent_classes
        self.feature_channels = feature_channels
        hidden = hidden or feature_channels
        self.net = nn.Sequential(
            nn.Linear(parent_classes, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 2 * feature_channels),
        )
        nn.init.zeros_(self.net[-1].weight)
        nn.init.zeros_(self.net[-1].bias)

    def forward(self, summary: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        out = self.net(summary)
        delta_gamma, beta = out.chunk(2, dim=-1)
        return 1.0 + delta_gamma, beta


def summarize(parent_probs: torch.Tensor) -> torch.Tensor:
    """Spatial mean of each parent-probability plane: ``B × C × H × W`` -> ``B × C``."""
    return parent_probs.mean(dim=(-2, -1))


def film_condition(
    features: torch.Tensor, parent_probs: torch.Tensor, generator: FiLMGenerator
) -> torch.Tensor:
    """Scale and shift each feature channel by parameters generated from the parent summary."""
    if features.dim() != 4 or parent_probs.dim() != 4:
        raise ValueError(
            f"expected B×C×H×W tensors, got features {tuple(features.shape)} "
            f"and parent probabilities {tuple(parent_probs.shape)}"
        )
    if parent_probs.shape[1] != generator.parent_classes:
        raise ValueError(
            f"generator expects {generator.parent_classes} parent classes, got {parent_probs.shape[1]}"
        )
    if features.shape[1] != generator.feature_channels:
        raise ValueError(
            f"generator emits {generator.feature_channels} channels, features have {features.shape[1]}"
        )
    gamma, beta = generator(summarize(parent_probs))
    return gamma[:, :, None, None] * features + beta[:, :, None, None]
