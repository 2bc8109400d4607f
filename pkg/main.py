"""Command-line entry point: prepare, train, eval, overlay, synthetic, params.

Exit codes: 0 success, 2 configuration error, 3 data or hierarchy error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from pydantic import ValidationError

from dataprep.class_weights import format_class_statistics
from dataprep.dataset import DatasetPaths, read_image, resize_pair
from dataprep.folds import load_fold_manifest
from dataprep.prepare import IMAGE_SUFFIXES, check_tree, prepare_dataset, write_splits_and_weights
from dataprep.synthetic import SyntheticSpec, generate, synthetic_tree
from evaluation.metrics import aggregate
from evaluation.overlay import load_palette, render_overlay, save_overlay
from hier_config import OVERLAY_ALPHA, TRAIN_DEFAULTS
from hierarchy import load_class_tree
from model.backbones import BackboneFactory
from model.checkpoint import load_checkpoint
from model.segmenter import ModelConfig, build_model, format_parameter_report, parameter_report
from training.cross_validation import evaluate_checkpoint, run_cv
from training.run_config import load_train_config
from training.trainer import predict_masks
from utils.env_loader import resolve_data_root
from utils.errors import (
    CheckpointMismatchError,
    ConfigError,
    DataValidationError,
    HierarchyFormatError,
    NumericAbortError,
    UnknownClassError,
)

logger = logging.getLogger("hierseg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# ─────────────────────  SUBCOMMANDS  ───────────────────────


def cmd_prepare(args: argparse.Namespace) -> int:
    out_dir = resolve_data_root(args.out)
    tree = load_class_tree(args.class_tree, args.class_map)
    summary = prepare_dataset(
        annotations=Path(args.annotations),
        images_dir=Path(args.images),
        out_dir=out_dir,
        tree=tree,
        k=args.folds,
        holdout_fraction=args.holdout,
        seed=args.seed,
        class_key=args.class_key,
        min_pixels=args.min_pixels,
        progress=not args.no_progress,
    )
    print(f"=== Prepared {len(summary.image_ids)} images into {out_dir} ===")
    print(f"Test images: {len(summary.splits.test_ids)}, folds: {summary.splits.k}")
    print(format_class_statistics(summary.statistics))
    return EXIT_OK


def _train_overrides(args: argparse.Namespace) -> Dict:
    folds = args.fold if args.fold else (list(range(args.folds)) if args.folds else None)
    model = {
        "backbone": args.backbone,
        "level_wide_softmax": True if args.level_wide_softmax else None,
        "restrict_threshold": args.threshold,
        "eps": args.eps,
    }
    loss = {
        "consistency_input": args.consistency_input,
        "ce_reduction": args.ce_reduction,
        "binary_ce": True if args.binary_ce else None,
    }
    return {
        "data_root": args.data_root,
        "run_dir": args.run_dir,
        "variant": args.variant,
        "backbone_label": args.backbone_label,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "max_steps": args.max_steps,
        "batch_size": args.batch_size,
        "image_size": args.image_size,
        "folds": folds,
        "seed": args.seed,
        "deterministic": True if args.deterministic else None,
        "resume": False if args.no_resume else None,
        "device": args.device,
        "progress": False if args.no_progress else None,
        "model": model,
        "loss": loss,
        "augmentation": {"enabled": False} if args.no_augment else None,
    }


def cmd_train(args: argparse.Namespace) -> int:
    config = load_train_config(args.config, _train_overrides(args))
    data_root = resolve_data_root(str(config.data_root) if config.data_root else None)
    result = run_cv(config, data_root, config.run_dir)
    print(f"=== Validation ({config.variant_key}, {len(result.records)} folds trained) ===")
    print(result.validation.to_table())
    if result.test is not None:
        print("\n=== Test ===")
        print(result.test.to_table())
    print(f"\nRun directory: {config.run_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_train_config(
        args.config, {"image_size": args.image_size, "batch_size": args.batch_size, "device": args.device}
    )
    paths = DatasetPaths(resolve_data_root(args.data_root))
    tree = paths.load_tree()
    splits = load_fold_manifest(paths.folds)
    out_dir = Path(args.out or Path(args.checkpoint).parent / "eval")
    for split in args.split:
        ids = splits.test_ids if split == "test" else splits.val_ids(args.fold)
        rows = evaluate_checkpoint(args.checkpoint, paths, ids, tree, config, fold=args.fold)
        report = aggregate(rows, class_order=tree.names)
        written = report.save(out_dir, prefix=split)
        print(f"=== {split} ({len(ids)} images) ===")
        print(report.to_table())
        print(f"Per-image CSV: {written['per_image']}")
    return EXIT_OK


def _image_files(source: Path) -> List[Path]:
    if source.is_dir():
        return sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not source.exists():
        raise FileNotFoundError(f"no image at {source}")
    return [source]


@torch.no_grad()
def cmd_overlay(args: argparse.Namespace) -> int:
    paths = DatasetPaths(resolve_data_root(args.data_root))
    tree = paths.load_tree()
    model, _ = load_checkpoint(args.checkpoint, tree)
    model.eval()
    palette = load_palette(args.palette)
    out_dir = Path(args.out)
    files = _image_files(Path(args.images))
    for path in files:
        image = read_image(path)
        image, _ = resize_pair(image, np.zeros_like(image), args.image_size)
        batch = torch.from_numpy(image.astype(np.float32) / 255.0)[None, None]
        masks = predict_masks(model, model(batch), tree)[0]
        overlay = render_overlay(image, masks, tree, palette, alpha=args.alpha)
        save_overlay(overlay, out_dir / f"{path.stem}.png")
    print(f"Wrote {len(files)} overlays to {out_dir}")
    return EXIT_OK


def cmd_synthetic(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        image_size=args.image_size,
        n_images=args.n_images,
        n_children=args.children,
        noise=args.noise,
        seed=args.seed,
    )
    check_tree(synthetic_tree(spec), "synthetic tree")
    out_dir = Path(args.out)
    dataset = generate(spec, out_dir)
    splits = write_splits_and_weights(
        DatasetPaths(out_dir), dataset.tree, k=args.folds, holdout_fraction=args.holdout, seed=args.seed
    )
    print(f"Wrote {len(dataset.image_ids)} synthetic images to {out_dir} ({splits.k} folds)")
    return EXIT_OK


def cmd_params(args: argparse.Namespace) -> int:
    if args.class_tree and args.class_map:
        tree = load_class_tree(args.class_tree, args.class_map)
    else:
        tree = DatasetPaths(resolve_data_root(args.data_root)).load_tree()
    for hierarchical in (False, True):
        model = build_model(ModelConfig(hierarchical=hierarchical, backbone=args.backbone), tree)
        print(f"=== {'hierarchical' if hierarchical else 'baseline'} ({args.backbone}) ===")
        print(format_parameter_report(parameter_report(model)))
    return EXIT_OK


# ─────────────────────  PARSER  ────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(description="Restrictive hierarchical semantic segmentation", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="rasterize annotations into a prepared dataset", formatter_class=fmt)
    p.add_argument("--annotations", required=True, help="annotation JSON file or directory of them")
    p.add_argument("--images", required=True, help="directory holding the source images")
    p.add_argument("--out", default=None, help="output root (default: $HIERSEG_DATA_ROOT)")
    p.add_argument("--class-tree", required=True, help="class_tree.json")
    p.add_argument("--class-map", required=True, help="class_map.csv")
    p.add_argument("--folds", type=int, default=TRAIN_DEFAULTS["folds"], help="cross-validation folds")
    p.add_argument("--holdout", type=float, default=TRAIN_DEFAULTS["holdout_fraction"], help="test fraction")
    p.add_argument("--seed", type=int, default=TRAIN_DEFAULTS["seed"], help="fold split seed")
    p.add_argument("--class-key", default="class", help="region attribute naming the class")
    p.add_argument("--min-pixels", type=int, default=50, help="drop overlap remnants of at most this size")
    p.add_argument("--no-progress", action="store_true", help="hide progress bars")
    p.set_defaults(func=cmd_prepare)

    t = sub.add_parser("train", help="train and cross-validate", formatter_class=fmt)
    t.add_argument("--config", default=None, help="JSON run config; flags override its keys")
    t.add_argument("--data-root", default=None, help="prepared dataset (default: $HIERSEG_DATA_ROOT)")
    t.add_argument("--run-dir", default=None, help="run directory (default: runs/default)")
    t.add_argument("--variant", choices=["hierarchical", "baseline"], default=None, help="default: hierarchical")
    t.add_argument("--backbone", choices=BackboneFactory.get_supported_backbones(), default=None, help="default: tiny")
    t.add_argument("--backbone-label", default=None, help="learning-rate table key, e.g. unet or hrnet")
    t.add_argument("--lr", type=float, default=None, help="starting rate (default: per-variant table)")
    t.add_argument("--epochs", type=int, default=None, help=f"default: {TRAIN_DEFAULTS['epochs']}")
    t.add_argument("--max-steps", type=int, default=None, help="cap on optimizer steps per fold")
    t.add_argument("--batch-size", type=int, default=None, help=f"default: {TRAIN_DEFAULTS['batch_size']}")
    t.add_argument("--image-size", type=int, default=None, help=f"default: {TRAIN_DEFAULTS['image_size']}")
    t.add_argument("--folds", type=int, default=None, help="train the first N folds (default: all)")
    t.add_argument("--fold", type=int, action="append", default=None, help="train only this fold (repeatable)")
    t.add_argument("--seed", type=int, default=None, help=f"default: {TRAIN_DEFAULTS['seed']}")
    t.add_argument("--deterministic", action="store_true", help="force deterministic kernels")
    t.add_argument("--no-resume", action="store_true", help="ignore last.pt and start over")
    t.add_argument("--device", default=None, help="torch device (default: cpu)")
    t.add_argument("--level-wide-softmax", action="store_true", help="normalize child logits across the level")
    t.add_argument("--threshold", type=float, default=None, help="restriction threshold (default: 0.5)")
    t.add_argument("--eps", type=float, default=None, help="composition epsilon (default: 1e-6)")
    t.add_argument("--consistency-input", choices=["restricted", "composed"], default=None, help="default: restricted")
    t.add_argument("--ce-reduction", choices=["sum", "mean"], default=None, help="default: sum")
    t.add_argument("--binary-ce", action="store_true", help="add the (1-y)log(1-P) term")
    t.add_argument("--no-augment", action="store_true", help="disable augmentation")
    t.add_argument("--no-progress", action="store_true", help="hide progress bars")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    e.add_argument("--checkpoint", required=True, help="best.pt or last.pt")
    e.add_argument("--data-root", default=None, help="prepared dataset (default: $HIERSEG_DATA_ROOT)")
    e.add_argument("--config", default=None, help="run config (config_snapshot.json works)")
    e.add_argument("--split", nargs="+", choices=["val", "test"], default=["val", "test"], help="splits to score")
    e.add_argument("--fold", type=int, default=0, help="fold whose validation split is scored")
    e.add_argument("--image-size", type=int, default=None, help="override the config image size")
    e.add_argument("--batch-size", type=int, default=None, help="override the config batch size")
    e.add_argument("--device", default=None, help="torch device")
    e.add_argument("--out", default=None, help="report directory (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("overlay", help="render prediction overlays", formatter_class=fmt)
    o.add_argument("--checkpoint", required=True, help="model checkpoint")
    o.add_argument("--images", required=True, help="image file or directory")
    o.add_argument("--data-root", default=None, help="prepared dataset holding the class tree")
    o.add_argument("--out", required=True, help="output directory for PNGs")
    o.add_argument("--palette", default=None, help='JSON palette override {"Class": [r, g, b]}')
    o.add_argument("--alpha", type=float, default=OVERLAY_ALPHA, help="colour opacity")
    o.add_argument("--image-size", type=int, default=None, help="resize before prediction")
    o.set_defaults(func=cmd_overlay)

    s = sub.add_parser("synthetic", help="write a synthetic two-level dataset", formatter_class=fmt)
    s.add_argument("--out", required=True, help="output root")
    s.add_argument("--image-size", type=int, default=64, help="square image side")
    s.add_argument("--n-images", type=int, default=20, help="number of images")
    s.add_argument("--children", type=int, default=3, help="child classes of the blob (1-4)")
    s.add_argument("--noise", type=float, default=0.02, help="additive Gaussian noise std")
    s.add_argument("--seed", type=int, default=0, help="generator seed")
    s.add_argument("--folds", type=int, default=TRAIN_DEFAULTS["folds"], help="cross-validation folds")
    s.add_argument("--holdout", type=float, default=TRAIN_DEFAULTS["holdout_fraction"], help="test fraction")
    s.set_defaults(func=cmd_synthetic)

    r = sub.add_parser("params", help="print parameter counts", formatter_class=fmt)
    r.add_argument("--backbone", choices=BackboneFactory.get_supported_backbones(), default="tiny", help="trunk")
    r.add_argument("--data-root", default=None, help="prepared dataset holding the class tree")
    r.add_argument("--class-tree", default=None, help="class_tree.json (with --class-map)")
    r.add_argument("--class-map", default=None, help="class_map.csv (with --class-tree)")
    r.set_defaults(func=cmd_params)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except NumericAbortError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    except (HierarchyFormatError, DataValidationError, UnknownClassError, CheckpointMismatchError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
