"""Single-fold training loop with plateau schedule, best-IoU checkpointing and resume."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from dataprep.class_weights import LossWeights, compute_class_weights, compute_flat_class_weights
from dataprep.dataset import DatasetPaths, HierSegDataset, read_mask, resize_pair
from dataprep.targets import flat_targets, mask_to_hier_targets
from evaluation.metrics import aggregate, binarize_flat, binarize_predictions, evaluate_image, image_records
from hierarchy import ClassTree
from model.checkpoint import load_checkpoint, save_checkpoint
from model.losses import LossBreakdown, flat_loss, hierarchical_loss
from model.segmenter import FlatSegmenter, Segmenter, build_model
from utils.errors import NumericAbortError
from utils.seeding import derive_seed, seed_everything, torch_generator

from .epoch_log import EpochLog
from .lr_schedule import LRState, apply_lr, observe
from .run_config import TrainConfig

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.pt"
LAST_CHECKPOINT = "last.pt"
EPOCH_LOG = "epochs.csv"


@dataclass
class FoldData:
    """What one fold trains and validates on."""

    paths: DatasetPaths
    tree: ClassTree
    train_ids: Sequence[str]
    val_ids: Sequence[str]


@dataclass
class RunRecord:
    fold: int
    epochs: List[Dict[str, float]] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_iou: float = -math.inf
    steps: int = 0
    checkpoint: Optional[Path] = None

    @property
    def final_lr(self) -> Optional[float]:
        return self.epochs[-1]["lr"] if self.epochs else None


def decreasing_window_fraction(losses: Sequence[float], window: int = 10, tolerance: float = 0.01) -> float:
    """Share of consecutive ``window``-step means that do not rise above the previous one.

    A rise smaller than ``tolerance`` times the first window's mean counts as flat, so
    batch noise at convergence is not read as an increase. Trailing steps that do not fill
    a window are ignored.
    """
    n_windows = len(losses) // window
    if n_windows < 2:
        raise ValueError(f"need at least {2 * window} steps for two windows, got {len(losses)}")
    means = np.asarray(losses[: n_windows * window], dtype=np.float64).reshape(n_windows, window).mean(axis=1)
    slack = tolerance * abs(means[0])
    return float(np.mean(means[1:] <= means[:-1] + slack))


def fold_class_weights(data: FoldData, image_size: Optional[int]) -> Tuple[LossWeights, np.ndarray]:
    """Hierarchical and flat weights from the fold's training masks only."""
    stacks, flats = [], []
    for image_id in data.train_ids:
        mask = read_mask(data.paths.mask_path(image_id)).data
        _, mask = resize_pair(np.zeros_like(mask), mask, image_size)
        stacks.append(mask_to_hier_targets(mask, data.tree))
        flats.append(flat_targets(mask, data.tree))
    return compute_class_weights(stacks, data.tree), compute_flat_class_weights(flats)


def make_loader(
    dataset: HierSegDataset, batch_size: int, shuffle: bool, generator=None, num_workers: int = 0
) -> DataLoader:
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
        drop_last=False,
    )


def compute_loss(
    model: Segmenter,
    batch: Dict,
    weights,
    flat_weights,
    tree: ClassTree,
    config: TrainConfig,
    device: torch.device,
) -> Tuple[LossBreakdown, object]:
    image = batch["image"].to(device)
    if isinstance(model, FlatSegmenter):
        output = model.baseline_forward(image)
        return flat_loss(output.probs, batch["flat"].to(device), flat_weights, config.loss), output
    targets = [t.to(device) for t in batch["targets"]]
    pyramid = model(image)
    return hierarchical_loss(pyramid, targets, weights, tree, config.loss), pyramid


def predict_masks(model: Segmenter, output, tree: ClassTree) -> np.ndarray:
    """``B × N × H × W`` boolean masks over every class in tree order."""
    if isinstance(model, FlatSegmenter):
        return binarize_flat(output.probs, tree)
    return binarize_predictions(output, model.restrict_threshold)


@torch.no_grad()
def evaluate_model(
    model: Segmenter,
    loader: DataLoader,
    tree: ClassTree,
    fold: Optional[int] = None,
    empty: str = "one",
    device: torch.device = torch.device("cpu"),
    loss_fn=None,
) -> Tuple[List[dict], float]:
    """Per-image metric rows for every batch in ``loader`` and the mean batch loss."""
    model.eval()
    rows: List[dict] = []
    losses: List[float] = []
    for batch in loader:
        image = batch["image"].to(device)
        output = model(image)
        if loss_fn is not None:
            losses.append(float(loss_fn(batch).total))
        masks = predict_masks(model, output, tree)
        targets = torch.cat(list(batch["targets"]), dim=1).cpu().numpy()
        for index, image_id in enumerate(batch["image_id"]):
            counts = evaluate_image(masks[index], targets[index], tree)
            rows.extend(image_records(image_id, counts, fold, empty))
    return rows, float(np.mean(losses)) if losses else math.nan


def _check_finite(breakdown: LossBreakdown, batch: Dict, epoch: int, step: int) -> None:
    values = breakdown.as_dict()
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        ids = list(batch["image_id"])
        logger.error("Non-finite loss at epoch %d step %d: %s; batch %s", epoch, step, bad, ids)
        raise NumericAbortError(
            f"non-finite loss components {sorted(bad)} at epoch {epoch}, step {step}; batch images {ids}",
            batch_ids=ids,
        )


def train_fold(
    fold: int,
    config: TrainConfig,
    data: FoldData,
    out_dir,
    model: Optional[Segmenter] = None,
) -> RunRecord:
    """Train one fold; ``out_dir`` receives ``best.pt``, ``last.pt`` and ``epochs.csv``.

    Re-running with ``config.resume`` continues from ``last.pt``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    device = torch.device(config.device)
    tree = data.tree
    fold_seed = derive_seed(config.seed, "fold", fold)
    seed_everything(fold_seed, config.deterministic)

    model = model if model is not None else build_model(config.model, tree)
    model.to(device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.starting_lr, weight_decay=config.weight_decay)
    schedule = LRState(
        lr=config.starting_lr,
        factor=config.plateau_factor,
        patience=config.plateau_patience,
        min_lr=config.min_lr,
        tolerance=config.improvement_tolerance,
    )
    record = RunRecord(fold=fold)
    start_epoch = 0

    last_path = out_dir / LAST_CHECKPOINT
    if config.resume and last_path.exists():
        model, payload = load_checkpoint(last_path, tree, model, map_location=device)
        optimizer.load_state_dict(payload["optimizer_state"])
        schedule = LRState.from_dict(payload["schedule"])
        record.epochs = list(payload["epochs"])
        record.best_epoch = payload["best_epoch"]
        record.best_iou = payload["best_iou"]
        record.steps = payload["steps"]
        record.step_losses = list(payload.get("step_losses", []))
        start_epoch = payload["epoch"] + 1
        logger.info("Fold %d: resuming at epoch %d (step %d)", fold, start_epoch, record.steps)

    weights, flat_weights = fold_class_weights(data, config.image_size)
    train_set = HierSegDataset(
        data.paths, data.train_ids, tree, config.image_size, config.augmentation, seed=fold_seed
    )
    val_set = HierSegDataset(data.paths, data.val_ids, tree, config.image_size, None, seed=fold_seed)
    val_loader = make_loader(val_set, config.batch_size, shuffle=False, num_workers=config.num_workers)

    fields = ["train_" + key for key in _loss_fields(tree, config)] + ["val_loss", "val_iou"]
    log = EpochLog(out_dir / EPOCH_LOG, fields)
    if start_epoch:
        log.truncate_after(start_epoch - 1)

    def batch_loss(batch):
        return compute_loss(model, batch, weights, flat_weights, tree, config, device)[0]

    for epoch in range(start_epoch, config.epochs):
        if config.max_steps is not None and record.steps >= config.max_steps:
            break
        train_set.set_epoch(epoch)
        loader = make_loader(
            train_set,
            config.batch_size,
            shuffle=True,
            generator=torch_generator(fold_seed, "loader", epoch),
            num_workers=config.num_workers,
        )
        apply_lr(optimizer, schedule.lr)
        model.train()
        totals: Dict[str, float] = {}
        batches = 0
        bar = tqdm(loader, desc=f"fold {fold} epoch {epoch}", leave=False, disable=not config.progress)
        for batch in bar:
            breakdown, _ = compute_loss(model, batch, weights, flat_weights, tree, config, device)
            _check_finite(breakdown, batch, epoch, record.steps)
            optimizer.zero_grad(set_to_none=True)
            breakdown.total.backward()
            optimizer.step()
            record.steps += 1
            record.step_losses.append(float(breakdown.total.detach()))
            batches += 1
            for key, value in breakdown.as_dict().items():
                totals[key] = totals.get(key, 0.0) + value
            bar.set_postfix(loss=f"{breakdown.as_dict()['total']:.4f}")
            if config.max_steps is not None and record.steps >= config.max_steps:
                break
        train = {key: value / max(batches, 1) for key, value in totals.items()}

        rows, val_loss = evaluate_model(
            model, val_loader, tree, fold, config.empty_class, device,
            loss_fn=batch_loss if config.plateau_metric == "val_loss" else None,
        )
        val_iou = aggregate(rows, class_order=tree.names).mean_iou
        epoch_row = {"epoch": epoch, "lr": schedule.lr, **{f"train_{k}": v for k, v in train.items()},
                     "val_loss": val_loss, "val_iou": val_iou}
        record.epochs.append(epoch_row)
        log.record(epoch, schedule.lr, epoch_row)
        logger.info(
            "Fold %d epoch %d: lr=%.5g loss=%.5f val IoU=%.4f",
            fold, epoch, schedule.lr, train.get("total", math.nan), val_iou,
        )

        if val_iou > record.best_iou:
            record.best_iou = val_iou
            record.best_epoch = epoch
            save_checkpoint(out_dir / BEST_CHECKPOINT, model, config.model, tree, epoch=epoch, val_iou=val_iou)

        monitored = val_loss if config.plateau_metric == "val_loss" else train.get("total", math.nan)
        schedule = observe(schedule, monitored)
        save_checkpoint(
            last_path, model, config.model, tree,
            epoch=epoch,
            optimizer_state=optimizer.state_dict(),
            schedule=schedule.to_dict(),
            epochs=record.epochs,
            best_epoch=record.best_epoch,
            best_iou=record.best_iou,
            steps=record.steps,
            step_losses=record.step_losses,
        )

    record.checkpoint = out_dir / BEST_CHECKPOINT
    return record


def _loss_fields(tree: ClassTree, config: TrainConfig) -> List[str]:
    levels = tree.depth if config.variant == "hierarchical" else 1
    fields = []
    for level in range(levels):
        fields += [f"dice_l{level}", f"ce_l{level}"]
    return fields + ["consistency", "total"]
