"""Adapter for donor segmentation networks given by import path."""

from __future__ import annotations

import importlib
from typing import Any, Dict, Optional

import torch
import torch.nn as nn

from utils.errors import ConfigError

from .base import BaseBackbone


def import_object(path: str) -> Any:
    """Resolve ``package.module:Name`` or ``package.module.Name``."""
    module_name, sep, attr = path.partition(":")
    if not sep:
        module_name, _, attr = path.rpartition(".")
    if not module_name or not attr:
        raise ConfigError(f"Invalid import path '{path}'; expected 'package.module:Name'")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise ConfigError(f"Cannot import '{module_name}' for donor backbone: {exc}") from exc
    try:
        return getattr(module, attr)
    except AttributeError:
        raise ConfigError(f"Module '{module_name}' has no attribute '{attr}'") from None


class ExternalBackbone(BaseBackbone):
    """Wraps any ``nn.Module`` whose output is a full-resolution feature map.

    The donor is built as ``factory(in_channels=..., **kwargs)`` unless ``pass_in_channels``
    is false, in which case the kwargs must already configure its input width.
    """

    def __init__(
        self,
        target: str,
        in_channels: int,
        feature_channels: int,
        kwargs: Optional[Dict[str, Any]] = None,
        pass_in_channels: bool = True,
    ):
        super().__init__(in_channels=in_channels, feature_channels=feature_channels)
        factory = import_object(target)
        kwargs = dict(kwargs or {})
        if pass_in_channels:
            kwargs.setdefault("in_channels", in_channels)
        module = factory(**kwargs)
        if not isinstance(module, nn.Module):
            raise ConfigError(f"'{target}' built a {type(module).__name__}, not a torch.nn.Module")
        self.target = target
        self.donor = module

    def extract(self, x: torch.Tensor) -> torch.Tensor:
        return self.donor(x)
