"""Checkpoint files tagged with the class hierarchy they were trained on."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from hierarchy import ClassTree
from utils.errors import CheckpointMismatchError

from .segmenter import ModelConfig, Segmenter, build_model

logger = logging.getLogger(__name__)


def save_checkpoint(
    path,
    model: Segmenter,
    model_config: ModelConfig,
    tree: ClassTree,
    **extra: Any,
) -> Path:
    """Write model weights, its config and the tree fingerprint; ``extra`` is stored as-is."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "model_state": model.state_dict(),
        "model_config": model_config.model_dump(),
        "tree_fingerprint": tree.fingerprint(),
        "class_names": list(tree.names),
        **extra,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def read_checkpoint(path, tree: ClassTree, map_location="cpu") -> Dict[str, Any]:
    """Load a checkpoint dict, rejecting it if it belongs to another hierarchy."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found at {path}. Train a model first (main.py train).")
    payload = torch.load(path, map_location=map_location, weights_only=False)
    found = payload.get("tree_fingerprint")
    expected = tree.fingerprint()
    if found != expected:
        raise CheckpointMismatchError(
            f"{path} was trained on classes {payload.get('class_names')} "
            f"(fingerprint {str(found)[:12]}), dataset hierarchy is {list(tree.names)} "
            f"(fingerprint {expected[:12]})"
        )
    return payload


def load_checkpoint(
    path, tree: ClassTree, model: Optional[Segmenter] = None, map_location="cpu"
) -> Tuple[Segmenter, Dict[str, Any]]:
    """Rebuild (or fill) a model from a checkpoint; returns the model and the raw payload."""
    payload = read_checkpoint(path, tree, map_location)
    if model is None:
        model = build_model(ModelConfig(**payload["model_config"]), tree)
    model.load_state_dict(payload["model_state"])
    logger.info("Loaded checkpoint %s (epoch %s)", path, payload.get("epoch"))
    return model, payload
