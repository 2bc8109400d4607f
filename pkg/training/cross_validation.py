"""k-fold harness: train every fold, then evaluate best checkpoints on val and test splits."""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dataprep.dataset import DatasetPaths, HierSegDataset
from dataprep.folds import FoldSplits, load_fold_manifest
from dataprep.prepare import check_tree
from evaluation.metrics import MetricsReport, aggregate
from hierarchy import ClassTree
from model.checkpoint import load_checkpoint
from utils.errors import ConfigError

from .run_config import TrainConfig, save_snapshot
from .trainer import BEST_CHECKPOINT, FoldData, RunRecord, evaluate_model, make_loader, train_fold

logger = logging.getLogger(__name__)


@dataclass
class CVResult:
    records: List[RunRecord]
    validation: MetricsReport
    test: Optional[MetricsReport]


def fold_dir(run_dir, fold: int) -> Path:
    return Path(run_dir) / f"fold_{fold}"


def evaluate_checkpoint(
    checkpoint,
    paths: DatasetPaths,
    image_ids: Sequence[str],
    tree: ClassTree,
    config: TrainConfig,
    fold: Optional[int] = None,
) -> List[dict]:
    """Per-image metric rows of one checkpoint on ``image_ids``."""
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(
            f"Missing checkpoint {checkpoint}. Train the fold first (main.py train)."
        )
    model, _ = load_checkpoint(checkpoint, tree, map_location=config.device)
    model.to(config.device)
    dataset = HierSegDataset(paths, image_ids, tree, config.image_size, None, seed=config.seed)
    loader = make_loader(dataset, config.batch_size, shuffle=False, num_workers=config.num_workers)
    rows, _ = evaluate_model(model, loader, tree, fold, config.empty_class, config.device)
    return rows


def run_cv(config: TrainConfig, data_root, run_dir=None, train: bool = True) -> CVResult:
    """Train (unless ``train`` is false) and evaluate the configured folds.

    Every variant reads the same ``folds.csv``; a copy is kept in the run directory.
    """
    paths = DatasetPaths(Path(data_root))
    run_dir = Path(run_dir or config.run_dir)
    tree = paths.load_tree()
    check_tree(tree, str(paths.class_tree))
    splits: FoldSplits = load_fold_manifest(paths.folds)
    folds = list(config.folds) if config.folds is not None else list(range(splits.k))
    unknown = [f for f in folds if not 0 <= f < splits.k]
    if unknown:
        raise ConfigError(f"folds {unknown} not in manifest with {splits.k} folds (valid: 0..{splits.k - 1})")

    save_snapshot(config, run_dir)
    shutil.copyfile(paths.folds, run_dir / "folds.csv")

    records: List[RunRecord] = []
    if train:
        for fold in folds:
            train_ids, val_ids = splits.split(fold)
            data = FoldData(paths=paths, tree=tree, train_ids=train_ids, val_ids=val_ids)
            record = train_fold(fold, config, data, fold_dir(run_dir, fold))
            logger.info("Fold %d finished: best epoch %s, val IoU %.4f", fold, record.best_epoch, record.best_iou)
            records.append(record)

    val_rows: List[dict] = []
    test_rows: List[dict] = []
    for fold in folds:
        checkpoint = fold_dir(run_dir, fold) / BEST_CHECKPOINT
        val_rows += evaluate_checkpoint(checkpoint, paths, splits.val_ids(fold), tree, config, fold)
        if splits.test_ids:
            test_rows += evaluate_checkpoint(checkpoint, paths, splits.test_ids, tree, config, fold)

    reports_dir = run_dir / "reports"
    validation = aggregate(val_rows, folds=folds, class_order=tree.names)
    validation.save(reports_dir, prefix="val")
    test = None
    if test_rows:
        test = aggregate(test_rows, folds=folds, class_order=tree.names)
        test.save(reports_dir, prefix="test")
    return CVResult(records=records, validation=validation, test=test)
