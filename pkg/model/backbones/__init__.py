from .base import BaseBackbone
from .external import ExternalBackbone
from .factory import BackboneFactory
from .tiny import TinyUNet

__all__ = ["BackboneFactory", "BaseBackbone", "ExternalBackbone", "TinyUNet"]
