"""Composition math, losses, FiLM, backbones and the segmenters built from them."""

from .backbones import BackboneFactory, BaseBackbone, ExternalBackbone, TinyUNet
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .composition import (
    LevelGroups,
    ProbPyramid,
    compose,
    compose_level,
    conditional_softmax,
    restrict,
    restrict_logits,
    root_activation,
)
from .film import FiLMGenerator, film_condition
from .losses import (
    LossBreakdown,
    LossConfig,
    consistency_loss,
    flat_loss,
    hier_ce,
    hier_dice,
    hierarchical_loss,
    total_loss,
    whl,
)
from .segmenter import (
    FlatOutput,
    FlatSegmenter,
    ForwardTrace,
    HierarchicalSegmenter,
    ModelConfig,
    build_model,
    class_probabilities,
    parameter_report,
)

__all__ = [
    "BackboneFactory",
    "BaseBackbone",
    "ExternalBackbone",
    "FiLMGenerator",
    "FlatOutput",
    "FlatSegmenter",
    "ForwardTrace",
    "HierarchicalSegmenter",
    "LevelGroups",
    "LossBreakdown",
    "LossConfig",
    "ModelConfig",
    "ProbPyramid",
    "TinyUNet",
    "build_model",
    "class_probabilities",
    "compose",
    "compose_level",
    "conditional_softmax",
    "consistency_loss",
    "film_condition",
    "flat_loss",
    "hier_ce",
    "hier_dice",
    "hierarchical_loss",
    "load_checkpoint",
    "parameter_report",
    "read_checkpoint",
    "restrict",
    "restrict_logits",
    "root_activation",
    "save_checkpoint",
    "total_loss",
    "whl",
]
