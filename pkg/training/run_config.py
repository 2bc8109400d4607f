"""Run configuration schema, JSON loading with overrides and the run snapshot."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dataprep.augment import AugmentationConfig
from hier_config import TRAIN_DEFAULTS, VARIANT_LEARNING_RATES
from model.losses import LossConfig
from model.segmenter import ModelConfig
from utils.errors import ConfigError

SNAPSHOT_NAME = "config_snapshot.json"


class TrainConfig(BaseModel):
    """Everything a training run needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    data_root: Optional[Path] = None
    run_dir: Path = Path("runs/default")
    variant: Literal["hierarchical", "baseline"] = "hierarchical"
    backbone_label: Optional[str] = None
    learning_rate: Optional[float] = Field(default=None, gt=0.0)
    epochs: int = Field(default=TRAIN_DEFAULTS["epochs"], ge=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    batch_size: int = Field(default=TRAIN_DEFAULTS["batch_size"], ge=1)
    image_size: Optional[int] = Field(default=TRAIN_DEFAULTS["image_size"], ge=8)
    weight_decay: float = Field(default=TRAIN_DEFAULTS["weight_decay"], ge=0.0)
    plateau_factor: float = Field(default=TRAIN_DEFAULTS["plateau_factor"], gt=0.0, lt=1.0)
    plateau_patience: int = Field(default=TRAIN_DEFAULTS["plateau_patience"], ge=1)
    min_lr: float = Field(default=TRAIN_DEFAULTS["min_lr"], ge=0.0)
    improvement_tolerance: float = Field(default=TRAIN_DEFAULTS["improvement_tolerance"], ge=0.0)
    plateau_metric: Literal["train_loss", "val_loss"] = "train_loss"
    folds: Optional[List[int]] = None
    seed: int = TRAIN_DEFAULTS["seed"]
    deterministic: bool = False
    resume: bool = True
    num_workers: int = Field(default=0, ge=0)
    device: str = "cpu"
    empty_class: Literal["one", "skip"] = "one"
    progress: bool = True
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    augmentation: AugmentationConfig = Field(default_factory=AugmentationConfig)

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        self.model.hierarchical = self.variant == "hierarchical"
        if self.min_lr > self.starting_lr:
            raise ValueError(f"min_lr {self.min_lr} exceeds the starting learning rate {self.starting_lr}")
        return self

    @property
    def variant_key(self) -> str:
        name = self.backbone_label or self.model.backbone
        return f"{name}-h" if self.variant == "hierarchical" else name

    @property
    def starting_lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        try:
            return VARIANT_LEARNING_RATES[self.variant_key]
        except KeyError:
            raise ValueError(
                f"No default learning rate for variant '{self.variant_key}'; set learning_rate. "
                f"Known variants: {sorted(VARIANT_LEARNING_RATES)}"
            ) from None


def _merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            merged[key] = _merge(dict(merged.get(key) or {}), value)
        else:
            merged[key] = value
    return merged


def load_train_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """Read a JSON config (optional), apply non-None overrides, validate.

    Raises:
        ConfigError: unreadable file or schema violation, before any compute starts
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {path} must hold a JSON object")
    try:
        return TrainConfig(**_merge(raw, overrides or {}))
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration{f' in {path}' if path else ''}:\n{exc}") from exc


def save_snapshot(config: TrainConfig, run_dir) -> Path:
    """Write the fully resolved config (every default included) into the run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = config.model_dump(mode="json")
    payload["learning_rate"] = config.starting_lr
    path = run_dir / SNAPSHOT_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
