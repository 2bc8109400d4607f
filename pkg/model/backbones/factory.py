"""Backbone factory for building segmentation trunks by name."""

from __future__ import annotations

from typing import Dict, List, Type

from .base import BaseBackbone
from .external import ExternalBackbone
from .tiny import TinyUNet


class BackboneFactory:
    """Factory class for creating the trunk shared by all hierarchy levels."""

    SUPPORTED_BACKBONES: Dict[str, Type[BaseBackbone]] = {
        "tiny": TinyUNet,
        "external": ExternalBackbone,
    }

    @classmethod
    def get_supported_backbones(cls) -> List[str]:
        return list(cls.SUPPORTED_BACKBONES)

    @classmethod
    def create_backbone(cls, name: str, **kwargs) -> BaseBackbone:
        """
        Create a backbone by registry name.

        Args:
            name: Registry key ("tiny", "external")
            **kwargs: Constructor arguments of the backbone class

        Returns:
            Backbone instance

        Raises:
            ValueError: If the name is not registered
        """
        if name not in cls.SUPPORTED_BACKBONES:
            raise ValueError(
                f"Unsupported backbone: {name}. "
                f"Supported backbones: {cls.get_supported_backbones()}"
            )
        return cls.SUPPORTED_BACKBONES[name](**kwargs)
