"""One seeded generator hierarchy for every random decision in a run."""

from __future__ import annotations

import hashlib
import random

import numpy as np
import torch


def derive_seed(root_seed: int, *purpose: object) -> int:
    """Derive a stable 63-bit child seed from ``root_seed`` and a purpose path."""
    text = ":".join([str(root_seed), *(str(p) for p in purpose)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


def seed_everything(seed: int, deterministic: bool = False) -> None:
    """Seed python, numpy and torch; optionally force deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False


def torch_generator(root_seed: int, *purpose: object) -> torch.Generator:
    """Return a torch generator seeded for ``purpose``."""
    generator = torch.Generator()
    generator.manual_seed(derive_seed(root_seed, *purpose))
    return generator


def numpy_generator(root_seed: int, *purpose: object) -> np.random.Generator:
    """Return a numpy generator seeded for ``purpose``."""
    return np.random.default_rng(derive_seed(root_seed, *purpose))
