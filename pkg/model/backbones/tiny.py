"""Small encoder-decoder with skip connections, used as the reference trunk."""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .base import BaseBackbone

NORM_GROUPS = 8


def _norm(channels: int) -> nn.GroupNorm:
    # no running statistics: the trunk sees a different input distribution at every level
    return nn.GroupNorm(math.gcd(NORM_GROUPS, channels), channels)


def conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
        _norm(out_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
        _norm(out_ch),
        nn.ReLU(inplace=True),
    )


class TinyUNet(BaseBackbone):
    """Three-stage UNet; ``widths`` are the channel counts from the top stage down."""

    def __init__(self, in_channels: int = 8, widths: Sequence[int] = (16, 32, 64)):
        widths = tuple(widths)
        if len(widths) != 3:
            raise ValueError(f"TinyUNet takes exactly three stage widths, got {widths}")
        super().__init__(in_channels=in_channels, feature_channels=widths[0])
        w1, w2, w3 = widths
        self.enc1 = conv_block(in_channels, w1)
        self.enc2 = conv_block(w1, w2)
        self.bottleneck = conv_block(w2, w3)
        self.up2 = nn.ConvTranspose2d(w3, w2, kernel_size=2, stride=2)
        self.dec2 = conv_block(2 * w2, w2)
        self.up1 = nn.ConvTranspose2d(w2, w1, kernel_size=2, stride=2)
        self.dec1 = conv_block(2 * w1, w1)

    @staticmethod
    def _merge(up: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        # odd input sizes lose a row/column when pooled
        if up.shape[-2:] != skip.shape[-2:]:
            up = F.interpolate(up, size=skip.shape[-2:], mode="nearest")
        return torch.cat([up, skip], dim=1)

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        s1 = self.enc1(x)
        s2 = self.enc2(F.max_pool2d(s1, 2))
        b = self.bottleneck(F.max_pool2d(s2, 2))
        d2 = self.dec2(self._merge(self.up2(b), s2))
        return self.dec1(self._merge(self.up1(d2), s1))
