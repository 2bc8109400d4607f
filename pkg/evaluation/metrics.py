"""Per-class segmentation metrics, fold aggregation and report tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from dataprep.targets import HierTargetStack, full_class_targets
from hier_config import RESTRICT_THRESHOLD
from hierarchy import ClassTree
from model.composition import ProbPyramid

logger = logging.getLogger(__name__)

METRICS = ("IoU", "Dice", "Precision", "Recall")
AVERAGE_ROW = "Average"

ArrayLike = Union[np.ndarray, torch.Tensor]


def _numpy(x: ArrayLike) -> np.ndarray:
    if torch.is_tensor(x):
        return x.detach().cpu().numpy()
    return np.asarray(x)


def binarize_predictions(probs: Union[ProbPyramid, ArrayLike], threshold: float = RESTRICT_THRESHOLD) -> np.ndarray:
    """Class masks ``probability >= threshold``; a pyramid contributes its restricted levels."""
    if isinstance(probs, ProbPyramid):
        probs = torch.cat(probs.restricted_probs, dim=1)
    return _numpy(probs) >= threshold


def binarize_flat(leaf_probs: ArrayLike, tree: ClassTree) -> np.ndarray:
    """Arg-max over the leaf axis; every class mask is the union of its leaf masks.

    ``leaf_probs`` is ``[B ×] L × H × W``; the result has the tree's full class axis.
    """
    probs = _numpy(leaf_probs)
    winner = probs.argmax(axis=-3)
    leaves = list(tree.flat_classes)
    planes = []
    for name in tree.names:
        members = [name] if name in leaves else [d for d in tree.descendants(name) if d in leaves]
        plane = np.zeros(winner.shape, dtype=bool)
        for member in members:
            plane |= winner == leaves.index(member)
        planes.append(plane)
    return np.stack(planes, axis=-3)


@dataclass
class ConfusionCounts:
    """Per-class pixel counts for one image."""

    class_names: Sequence[str]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.tp + self.fp + self.fn + self.tn

    def scores(self, empty: str = "one") -> Dict[str, np.ndarray]:
        return scores(self, empty)


def evaluate_image(
    pred: ArrayLike, target: Union[HierTargetStack, ArrayLike], tree: ClassTree
) -> ConfusionCounts:
    """Count TP/FP/FN/TN for every class over the whole image (-1 targets count as 0)."""
    pred = _numpy(pred).astype(bool)
    if isinstance(target, HierTargetStack):
        target = full_class_targets(target, tree)
    target = _numpy(target) == 1
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} shapes differ")
    if pred.shape[0] != len(tree.names):
        raise ValueError(f"expected {len(tree.names)} class planes, got {pred.shape[0]}")
    flat_p = pred.reshape(pred.shape[0], -1)
    flat_t = target.reshape(target.shape[0], -1)
    tp = np.sum(flat_p & flat_t, axis=1)
    fp = np.sum(flat_p & ~flat_t, axis=1)
    fn = np.sum(~flat_p & flat_t, axis=1)
    tn = np.sum(~flat_p & ~flat_t, axis=1)
    return ConfusionCounts(tuple(tree.names), tp, fp, fn, tn)


def _ratio(num: np.ndarray, den: np.ndarray, absent: np.ndarray, empty_value: float) -> np.ndarray:
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=den > 0)
    return np.where(absent, empty_value, out)


def scores(counts: ConfusionCounts, empty: str = "one") -> Dict[str, np.ndarray]:
    """IoU, Dice, Precision and Recall per class.

    A class absent from both prediction and target scores 1 (``empty="one"``) or NaN
    (``empty="skip"``, dropped from later means). Other zero denominators score 0.
    """
    if empty not in ("one", "skip"):
        raise ValueError(f"Unknown empty-class rule '{empty}'")
    tp, fp, fn = (c.astype(np.float64) for c in (counts.tp, counts.fp, counts.fn))
    absent = (tp + fp + fn) == 0
    value = 1.0 if empty == "one" else np.nan
    return {
        "IoU": _ratio(tp, tp + fp + fn, absent, value),
        "Dice": _ratio(2 * tp, 2 * tp + fp + fn, absent, value),
        "Precision": _ratio(tp, tp + fp, absent, value),
        "Recall": _ratio(tp, tp + fn, absent, value),
    }


def image_records(
    image_id: str, counts: ConfusionCounts, fold: Optional[int] = None, empty: str = "one"
) -> List[dict]:
    """One row per class with counts and scores, ready for a DataFrame."""
    values = scores(counts, empty)
    rows = []
    for index, name in enumerate(counts.class_names):
        row = {"image_id": image_id, "fold": fold, "class": name}
        row.update({metric: float(values[metric][index]) for metric in METRICS})
        row.update(
            TP=int(counts.tp[index]), FP=int(counts.fp[index]),
            FN=int(counts.fn[index]), TN=int(counts.tn[index]),
        )
        rows.append(row)
    return rows


@dataclass
class MetricsReport:
    """Per-image rows plus the fold-aggregated summary (mean and std per class)."""

    per_image: pd.DataFrame
    summary: pd.DataFrame
    fold_means: pd.DataFrame

    def value(self, class_name: str, metric: str = "IoU", stat: str = "mean") -> float:
        return float(self.summary.loc[class_name, (metric, stat)])

    @property
    def mean_iou(self) -> float:
        return self.value(AVERAGE_ROW, "IoU")

    def to_table(self, digits: int = 3) -> str:
        """Text table: one row per class plus Average, cells ``mean (±std)``."""
        table = pd.DataFrame(index=self.summary.index)
        for metric in METRICS:
            mean = self.summary[(metric, "mean")]
            std = self.summary[(metric, "std")]
            table[metric] = [
                f"{m:.{digits}f} (±{s:.{digits}f})" for m, s in zip(mean, std)
            ]
        return table.to_string()

    def save(self, out_dir, prefix: str = "") -> Dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{prefix}_" if prefix else ""
        paths = {
            "per_image": out_dir / f"{stem}per_image.csv",
            "summary": out_dir / f"{stem}summary.csv",
        }
        self.per_image.to_csv(paths["per_image"], index=False, float_format="%.6f")
        flat = self.summary.copy()
        flat.columns = [f"{metric}_{stat}" for metric, stat in flat.columns]
        flat.to_csv(paths["summary"], index_label="class", float_format="%.6f")
        return paths


def aggregate(
    records: Union[pd.DataFrame, Iterable[Mapping]],
    folds: Optional[Sequence[int]] = None,
    class_order: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """Per-fold means first, then mean and population std across fold means.

    The Average row is the unweighted mean over classes, computed per fold before the
    across-fold statistics. Rows without a fold are treated as a single fold 0.
    """
    frame = records if isinstance(records, pd.DataFrame) else pd.DataFrame(list(records))
    if frame.empty:
        raise ValueError("no per-image records to aggregate")
    frame = frame.copy()
    frame["fold"] = pd.to_numeric(frame["fold"], errors="coerce").fillna(0).astype(int)
    if folds is not None:
        empty = sorted(set(folds) - set(frame["fold"].unique()))
        if empty:
            raise ValueError(f"folds {empty} have no evaluated images")

    order = list(class_order) if class_order is not None else list(dict.fromkeys(frame["class"]))
    fold_means = frame.groupby(["fold", "class"], sort=False)[list(METRICS)].mean()
    average = fold_means.groupby(level="fold").mean()
    average.index = pd.MultiIndex.from_product([average.index, [AVERAGE_ROW]], names=["fold", "class"])
    fold_means = pd.concat([fold_means, average]).sort_index(level="fold", sort_remaining=False)

    grouped = fold_means.groupby(level="class", sort=False)
    summary = pd.concat(
        {"mean": grouped.mean(), "std": grouped.std(ddof=0)}, axis=1
    ).swaplevel(axis=1)
    summary = summary.reindex(columns=pd.MultiIndex.from_product([METRICS, ["mean", "std"]]))
    summary = summary.reindex(order + [AVERAGE_ROW])
    return MetricsReport(per_image=frame, summary=summary, fold_means=fold_means)
