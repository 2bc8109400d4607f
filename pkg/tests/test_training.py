"""Plateau schedule, run configuration, epoch log and the single-fold loop."""

from __future__ import annotations

import json
import math
import random

import pytest
import torch

from dataprep.dataset import DatasetPaths
from dataprep.folds import load_fold_manifest
from model.losses import LevelLoss, LossBreakdown
from training import EpochLog, LRState, TrainConfig, load_train_config, lr_step, observe, save_snapshot
from training.lr_schedule import apply_lr
from training.trainer import (
    BEST_CHECKPOINT,
    EPOCH_LOG,
    LAST_CHECKPOINT,
    FoldData,
    _check_finite,
    decreasing_window_fraction,
    fold_class_weights,
    train_fold,
)
from utils.errors import ConfigError, NumericAbortError


# ------------------------------------------------------------------
# Learning-rate schedule
# ------------------------------------------------------------------


class TestLRSchedule:
    """Decay after a run of stalled epochs, never below the floor."""

    def test_decay_after_patience(self):
        state = LRState(lr=0.022, patience=3, factor=0.5, min_lr=0.001)
        for _ in range(2):
            state = lr_step(state, improved=False)
            assert state.lr == 0.022
        state = lr_step(state, improved=False)
        assert state.lr == pytest.approx(0.011)
        assert state.stalls == 0

    def test_floor(self):
        state = LRState(lr=0.0015, patience=1, factor=0.5, min_lr=0.001)
        state = lr_step(state, improved=False)
        assert state.lr == 0.001
        assert lr_step(state, improved=False).lr == 0.001

    def test_improvement_resets_counter(self):
        state = LRState(lr=0.02, patience=3)
        state = lr_step(lr_step(state, False), False)
        state = lr_step(state, True)
        assert state.stalls == 0
        state = lr_step(lr_step(state, False), False)
        assert state.lr == 0.02

    def test_replay_matches_counter_rule(self):
        rng = random.Random(0)
        for _ in range(1000):
            patience = rng.randint(1, 5)
            state = LRState(lr=0.02, patience=patience, factor=0.5, min_lr=0.001)
            lr, stalls = 0.02, 0
            for _ in range(rng.randint(1, 30)):
                improved = rng.random() < 0.3
                state = lr_step(state, improved)
                if improved:
                    stalls = 0
                else:
                    stalls += 1
                    if stalls == patience:
                        lr, stalls = max(lr * 0.5, 0.001), 0
                assert state.lr == pytest.approx(lr)
                assert state.stalls == stalls
                assert 0.001 <= state.lr <= 0.02

    def test_observe_tolerance(self):
        state = observe(LRState(lr=0.01, tolerance=1e-5), 1.0)
        assert state.best == 1.0
        assert state.stalls == 0
        state = observe(state, 1.0 - 1e-6)
        assert state.best == 1.0
        assert state.stalls == 1
        state = observe(state, 0.9)
        assert state.best == 0.9
        assert state.stalls == 0

    def test_state_round_trip(self):
        state = LRState(lr=0.01, stalls=2, best=0.5)
        assert LRState.from_dict(json.loads(json.dumps(state.to_dict()))) == state

    def test_apply_lr(self):
        optimizer = torch.optim.AdamW([torch.nn.Parameter(torch.zeros(1))], lr=0.1)
        apply_lr(optimizer, 0.025)
        assert optimizer.param_groups[0]["lr"] == 0.025


# ------------------------------------------------------------------
# Run configuration
# ------------------------------------------------------------------


class TestTrainConfig:
    """Validation, defaults and overrides."""

    def test_default_learning_rates(self):
        assert TrainConfig().starting_lr == 0.01
        assert TrainConfig(backbone_label="hrnet").starting_lr == 0.024
        assert TrainConfig(backbone_label="hrnet", variant="baseline").starting_lr == 0.022
        assert TrainConfig(learning_rate=0.005, min_lr=0.0001).starting_lr == 0.005

    def test_variant_sets_model_mode(self):
        assert TrainConfig(variant="baseline").model.hierarchical is False
        assert TrainConfig().model.hierarchical is True

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"epochs": 3, "learnig_rate": 0.1}))
        with pytest.raises(ConfigError, match="learnig_rate"):
            load_train_config(path)

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="dropout"):
            load_train_config(None, {"model": {"dropout": 0.1}})

    def test_min_lr_above_start(self):
        with pytest.raises(ConfigError, match="min_lr"):
            load_train_config(None, {"learning_rate": 0.0005})

    def test_unknown_variant_needs_rate(self):
        with pytest.raises(ConfigError, match="No default learning rate"):
            load_train_config(None, {"backbone_label": "segformer"})

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_train_config(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{epochs: 3")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_train_config(bad)

    def test_overrides_merge(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"epochs": 3, "model": {"film": False, "eps": 1e-5}}))
        config = load_train_config(path, {"epochs": None, "batch_size": 2, "model": {"eps": 1e-4, "backbone": None}})
        assert config.epochs == 3
        assert config.batch_size == 2
        assert config.model.film is False
        assert config.model.eps == 1e-4

    def test_snapshot(self, tmp_path):
        path = save_snapshot(TrainConfig(epochs=5), tmp_path)
        payload = json.loads(path.read_text())
        assert payload["learning_rate"] == 0.01
        assert payload["epochs"] == 5
        assert payload["loss"]["consistency_input"] == "restricted"
        assert TrainConfig(**payload).epochs == 5


# ------------------------------------------------------------------
# Epoch log
# ------------------------------------------------------------------


class TestEpochLog:
    def test_record_and_truncate(self, tmp_path):
        log = EpochLog(tmp_path / "epochs.csv", ["train_total", "val_iou"])
        for epoch in range(3):
            log.record(epoch, 0.01, {"train_total": 1.0 - epoch / 10, "val_iou": epoch / 10, "unused": 1})
        frame = log.read()
        assert list(frame.columns) == ["epoch", "lr", "train_total", "val_iou"]
        assert len(frame) == 3
        log.truncate_after(0)
        assert log.read()["epoch"].tolist() == [0]

    def test_existing_file_kept(self, tmp_path):
        EpochLog(tmp_path / "epochs.csv", ["a"]).record(0, 0.1, {"a": 1})
        EpochLog(tmp_path / "epochs.csv", ["a"])
        assert len(EpochLog(tmp_path / "epochs.csv", ["a"]).read()) == 1


# ------------------------------------------------------------------
# Single fold
# ------------------------------------------------------------------


def _fold_data(root, fold=0):
    paths = DatasetPaths(root)
    splits = load_fold_manifest(paths.folds)
    train_ids, val_ids = splits.split(fold)
    return FoldData(paths=paths, tree=paths.load_tree(), train_ids=train_ids, val_ids=val_ids)


def _quick_config(**overrides):
    base = dict(
        epochs=2, batch_size=4, image_size=32, progress=False, learning_rate=0.01,
        augmentation={"enabled": False},
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainFold:
    """Checkpoints, epoch log, resume and the numeric guard."""

    def test_writes_outputs_and_resumes(self, synthetic_root, tmp_path):
        data = _fold_data(synthetic_root)
        out = tmp_path / "fold_0"
        record = train_fold(0, _quick_config(), data, out)
        assert (out / BEST_CHECKPOINT).exists()
        assert (out / LAST_CHECKPOINT).exists()
        assert len(record.epochs) == 2
        assert record.steps == 2 * math.ceil(len(data.train_ids) / 4)
        assert 0.0 <= record.best_iou <= 1.0
        assert len(record.step_losses) == record.steps

        resumed = train_fold(0, _quick_config(epochs=3), data, out)
        assert [row["epoch"] for row in resumed.epochs] == [0, 1, 2]
        assert resumed.steps == 3 * math.ceil(len(data.train_ids) / 4)
        assert resumed.step_losses[: record.steps] == record.step_losses
        assert len(resumed.step_losses) == resumed.steps
        assert EpochLog(out / EPOCH_LOG, []).read()["epoch"].tolist() == [0, 1, 2]

    def test_max_steps(self, synthetic_root, tmp_path):
        record = train_fold(0, _quick_config(epochs=5, max_steps=3), _fold_data(synthetic_root), tmp_path)
        assert record.steps == 3

    def test_baseline_variant(self, synthetic_root, tmp_path):
        record = train_fold(0, _quick_config(epochs=1, variant="baseline"), _fold_data(synthetic_root), tmp_path)
        assert "train_dice_l0" in record.epochs[0]
        assert "train_dice_l1" not in record.epochs[0]

    def test_weights_from_training_masks_only(self, synthetic_root):
        data = _fold_data(synthetic_root)
        for image_id in data.val_ids:
            data.paths.mask_path(image_id).unlink()
        weights, flat = fold_class_weights(data, 32)
        assert len(weights.levels) == 2
        assert flat.shape == (4,)

    def test_non_finite_loss_aborts(self):
        breakdown = LossBreakdown(
            levels=[LevelLoss(dice=torch.tensor(float("nan")), ce=torch.tensor(0.0))],
            consistency=torch.tensor(0.0),
        )
        with pytest.raises(NumericAbortError, match="dice_l0") as info:
            _check_finite(breakdown, {"image_id": ["a", "b"]}, epoch=1, step=7)
        assert info.value.batch_ids == ["a", "b"]


class TestWindowedDecrease:
    """Share of 10-step windows whose mean loss does not rise."""

    def test_strictly_falling(self):
        losses = [100.0 - i for i in range(50)]
        assert decreasing_window_fraction(losses) == 1.0

    def test_one_rise_in_four(self):
        means = [10.0, 8.0, 9.0, 7.0, 6.0]
        losses = [m for m in means for _ in range(10)]
        assert decreasing_window_fraction(losses) == pytest.approx(0.75)

    def test_small_rise_is_flat(self):
        means = [10.0, 5.0, 5.05]
        losses = [m for m in means for _ in range(10)]
        assert decreasing_window_fraction(losses) == 1.0
        assert decreasing_window_fraction(losses, tolerance=0.0) == pytest.approx(0.5)

    def test_partial_window_ignored(self):
        losses = [3.0] * 10 + [2.0] * 10 + [50.0] * 9
        assert decreasing_window_fraction(losses) == 1.0

    def test_too_few_steps(self):
        with pytest.raises(ValueError, match="two windows"):
            decreasing_window_fraction([1.0] * 19)
