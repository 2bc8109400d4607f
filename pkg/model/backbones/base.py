"""Backbone contract shared by every trunk the segmenters can wrap."""

from __future__ import annotations

from abc import ABC, abstractmethod

import torch
import torch.nn as nn


class BaseBackbone(nn.Module, ABC):
    """Maps ``B × in_channels × H × W`` planes to ``B × feature_channels × H × W`` features.

    Output spatial size must equal input spatial size. One instance is shared by every
    hierarchy level.
    """

    def __init__(self, in_channels: int, feature_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.feature_channels = feature_channels

    @abstractmethod
    def extract(self, x: torch.Tensor) -> torch.Tensor:
        """Compute the final feature map."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.in_channels:
            raise ValueError(f"{type(self).__name__} expects {self.in_channels} input channels, got {x.shape[1]}")
        features = self.extract(x)
        if features.shape[-2:] != x.shape[-2:] or features.shape[1] != self.feature_channels:
            raise ValueError(
                f"{type(self).__name__} returned {tuple(features.shape)} for input {tuple(x.shape)}; "
                f"expected {self.feature_channels} channels at the input resolution"
            )
        return features
