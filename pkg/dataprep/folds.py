"""Hold-out test split and k-fold train/validation splits, persisted as a CSV manifest."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from utils.errors import DataValidationError

TEST_SPLIT = "test"


@dataclass(frozen=True)
class FoldSplits:
    """Test ids plus, per fold, its (train ids, validation ids)."""

    test_ids: Tuple[str, ...]
    val_folds: Tuple[Tuple[str, ...], ...]

    @property
    def k(self) -> int:
        return len(self.val_folds)

    def train_ids(self, fold: int) -> Tuple[str, ...]:
        return tuple(i for f, ids in enumerate(self.val_folds) if f != fold for i in ids)

    def val_ids(self, fold: int) -> Tuple[str, ...]:
        return self.val_folds[fold]

    def split(self, fold: int) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
        return self.train_ids(fold), self.val_ids(fold)

    def fold_of(self) -> Dict[str, int]:
        return {i: f for f, ids in enumerate(self.val_folds) for i in ids}


def make_folds(
    image_ids: Sequence[str],
    k: int = 5,
    holdout_fraction: float = 0.10,
    seed: int = 0,
) -> FoldSplits:
    """Randomly hold out ``floor(holdout_fraction * n)`` test ids, then split the rest into k folds.

    Fold sizes differ by at most one (197 ids → 19 test, validation folds of 36/36/36/35/35).
    """
    ids = sorted(dict.fromkeys(str(i) for i in image_ids))
    n_test = int(len(ids) * holdout_fraction)
    if len(ids) - n_test < k:
        raise DataValidationError(
            f"need at least {k} images after the hold-out split, got {len(ids) - n_test}"
        )
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    test_ids = tuple(sorted(shuffled[:n_test]))
    remainder = shuffled[n_test:]
    val_folds = tuple(tuple(sorted(chunk.tolist())) for chunk in np.array_split(np.array(remainder, dtype=object), k))
    return FoldSplits(test_ids=test_ids, val_folds=val_folds)


def save_fold_manifest(splits: FoldSplits, path) -> None:
    """Write ``image_id,split`` rows, split = ``test`` or the fold index."""
    rows: List[Tuple[str, str]] = [(i, TEST_SPLIT) for i in splits.test_ids]
    rows += [(i, str(f)) for f, ids in enumerate(splits.val_folds) for i in ids]
    rows.sort()
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image_id", "split"])
        writer.writerows(rows)


def load_fold_manifest(path) -> FoldSplits:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(
            f"No fold manifest found at {path}. Run `python main.py prepare` to generate it."
        )
    test_ids: List[str] = []
    folds: Dict[int, List[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            if row["split"] == TEST_SPLIT:
                test_ids.append(row["image_id"])
            else:
                folds.setdefault(int(row["split"]), []).append(row["image_id"])
    if not folds or sorted(folds) != list(range(len(folds))):
        raise DataValidationError(f"{path}: fold indices must be 0..k-1, got {sorted(folds)}")
    return FoldSplits(
        test_ids=tuple(sorted(test_ids)),
        val_folds=tuple(tuple(sorted(folds[f])) for f in range(len(folds))),
    )
