"""Plateau learning-rate schedule as an explicit state machine."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Dict

import torch

from hier_config import TRAIN_DEFAULTS


@dataclass(frozen=True)
class LRState:
    lr: float
    stalls: int = 0
    best: float = math.inf
    factor: float = TRAIN_DEFAULTS["plateau_factor"]
    patience: int = TRAIN_DEFAULTS["plateau_patience"]
    min_lr: float = TRAIN_DEFAULTS["min_lr"]
    tolerance: float = TRAIN_DEFAULTS["improvement_tolerance"]

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "LRState":
        return cls(**data)


def lr_step(state: LRState, improved: bool) -> LRState:
    """Reset the stall counter on improvement; after ``patience`` stalls decay the rate.

    The decayed rate is ``max(lr * factor, min_lr)`` and the counter restarts at 0.
    """
    if improved:
        return replace(state, stalls=0)
    stalls = state.stalls + 1
    if stalls >= state.patience:
        return replace(state, lr=max(state.lr * state.factor, state.min_lr), stalls=0)
    return replace(state, stalls=stalls)


def observe(state: LRState, loss: float) -> LRState:
    """Feed one epoch's monitored loss; improvement means beating the best by ``tolerance``."""
    improved = loss < state.best - state.tolerance
    if improved:
        state = replace(state, best=loss)
    return lr_step(state, improved)


def apply_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
