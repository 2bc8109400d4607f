"""Training: run configuration, plateau schedule, fold trainer and cross-validation."""

from .cross_validation import CVResult, evaluate_checkpoint, run_cv
from .epoch_log import EpochLog
from .lr_schedule import LRState, lr_step, observe
from .run_config import TrainConfig, load_train_config, save_snapshot
from .trainer import FoldData, RunRecord, decreasing_window_fraction, evaluate_model, train_fold

__all__ = [
    "CVResult",
    "EpochLog",
    "FoldData",
    "LRState",
    "RunRecord",
    "TrainConfig",
    "decreasing_window_fraction",
    "evaluate_checkpoint",
    "evaluate_model",
    "load_train_config",
    "lr_step",
    "observe",
    "run_cv",
    "save_snapshot",
    "train_fold",
]
