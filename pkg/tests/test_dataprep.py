"""Rasterization, hierarchical targets, class weights, folds and dataset preparation."""

from __future__ import annotations

import json
import logging

import numpy as np
import pytest
from PIL import Image

from dataprep import (
    HierTargetStack,
    PolygonInstance,
    SemanticMask,
    class_statistics,
    compute_class_weights,
    flat_targets,
    hier_targets_to_mask,
    load_fold_manifest,
    load_via_annotations,
    make_folds,
    mask_to_hier_targets,
    polygons_to_mask,
    rasterize_polygon,
    save_fold_manifest,
)
from dataprep.class_weights import inverse_median_frequency
from dataprep.dataset import DatasetPaths
from dataprep.prepare import prepare_dataset
from utils.errors import DataValidationError


def rect(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def instance(name, *box):
    return PolygonInstance(name, rect(*box), "img")


# ------------------------------------------------------------------
# Rasterization
# ------------------------------------------------------------------


class TestPolygonsToMask:
    """Priority order, overlap removal and the small-remnant filter."""

    def test_rectangle_covers_pixel_centres(self):
        """Integer-vertex rectangles cover exactly width × height pixels."""
        assert rasterize_polygon(rect(2, 3, 9, 10), 16, 16).sum() == 49

    def test_out_of_bounds_vertices_are_clipped(self):
        assert rasterize_polygon(rect(-5, -5, 10, 10), 16, 16).sum() == 100

    def test_composite_wins_over_dentin(self, tl_tree):
        """Overlap goes to Composite (7); the rest of the Dentin polygon stays Dentin (5)."""
        mask = polygons_to_mask(
            [instance("Dentin", 2, 2, 22, 22), instance("Composite", 12, 2, 22, 22)], (32, 32), tl_tree
        ).data
        assert (mask == 7).sum() == 200
        assert (mask == 5).sum() == 200
        assert np.all(mask[2:22, 12:22] == 7)

    def test_tooth_classes_win_over_alveolar_bone(self, tl_tree):
        mask = polygons_to_mask(
            [instance("Upper", 0, 0, 20, 20), instance("Pulp", 10, 10, 30, 30)], (32, 32), tl_tree
        ).data
        assert np.all(mask[10:30, 10:30] == 4)
        assert (mask == 1).sum() == 400 - 100

    def test_no_instances_is_background(self, tl_tree):
        mask = polygons_to_mask([], (8, 6), tl_tree)
        assert mask.data.shape == (6, 8)
        assert not mask.data.any()

    def test_49_pixel_remnant_is_dropped(self, tl_tree):
        """A 7×7 Dentin remnant left next to Enamel is removed."""
        mask = polygons_to_mask(
            [instance("Dentin", 0, 0, 17, 7), instance("Enamel", 7, 0, 20, 10)], (32, 32), tl_tree
        ).data
        assert (mask == 5).sum() == 0
        assert (mask == 6).sum() == 130

    def test_51_pixel_remnant_is_kept(self, tl_tree):
        """A 17×3 Dentin remnant survives."""
        mask = polygons_to_mask(
            [instance("Dentin", 0, 0, 27, 3), instance("Enamel", 17, 0, 30, 10)], (32, 32), tl_tree
        ).data
        assert (mask == 5).sum() == 51

    def test_unknown_class(self, tl_tree):
        with pytest.raises(DataValidationError, match="not in the class map"):
            polygons_to_mask([instance("Crown", 0, 0, 10, 10)], (16, 16), tl_tree)

    def test_parent_class_cannot_be_stored(self, tl_tree):
        with pytest.raises(DataValidationError, match="parent class"):
            polygons_to_mask([instance("Tooth", 0, 0, 10, 10)], (16, 16), tl_tree)

    def test_too_few_vertices(self):
        with pytest.raises(DataValidationError, match="at least 3"):
            PolygonInstance("Dentin", ((0, 0), (1, 1)))

    def test_rasterizing_own_output_is_stable(self, tl_tree):
        """Re-rasterizing the rectangles of a mask reproduces it."""
        first = polygons_to_mask([instance("Pulp", 4, 4, 20, 12)], (24, 24), tl_tree).data
        rows, cols = np.nonzero(first == 4)
        box = (cols.min(), rows.min(), cols.max() + 1, rows.max() + 1)
        again = polygons_to_mask([instance("Pulp", *box)], (24, 24), tl_tree).data
        assert np.array_equal(first, again)


class TestViaAnnotations:
    """VGG-style annotator exports."""

    def test_regions_as_list_and_dict(self):
        payload = {
            "a.png1234": {
                "filename": "a.png",
                "regions": [
                    {
                        "shape_attributes": {"name": "polygon", "all_points_x": [0, 10, 10], "all_points_y": [0, 0, 10]},
                        "region_attributes": {"class": "Dentin"},
                    },
                    {"shape_attributes": {"name": "rect"}, "region_attributes": {"class": "Pulp"}},
                ],
            },
            "b.png99": {
                "filename": "b.png",
                "regions": {
                    "0": {
                        "shape_attributes": {"name": "polygon", "all_points_x": [1, 2, 3], "all_points_y": [4, 5, 6]},
                        "region_attributes": {"class": "Enamel"},
                    }
                },
            },
        }
        parsed = load_via_annotations(json.dumps({"_via_img_metadata": payload}))
        assert sorted(parsed) == ["a", "b"]
        assert [i.class_name for i in parsed["a"]] == ["Dentin"]
        assert parsed["b"][0].vertices == ((1, 4), (2, 5), (3, 6))

    def test_missing_class_attribute(self):
        payload = {
            "a": {
                "filename": "a.png",
                "regions": [{"shape_attributes": {"name": "polygon", "all_points_x": [0, 1, 1], "all_points_y": [0, 0, 1]},
                             "region_attributes": {}}],
            }
        }
        with pytest.raises(DataValidationError, match="without a 'class' attribute"):
            load_via_annotations(json.dumps(payload))


# ------------------------------------------------------------------
# Hierarchical targets
# ------------------------------------------------------------------


class TestHierTargets:
    """{0, 1, -1} planes per level."""

    def test_dentin_pixel(self, tl_tree):
        stack = mask_to_hier_targets(np.array([[5]]), tl_tree)
        assert stack.planes[0][:, 0, 0].tolist() == [0, 0, 0, 1]
        assert stack.planes[1][:, 0, 0].tolist() == [0, 1, 0, 0]

    def test_background_pixel(self, tl_tree):
        stack = mask_to_hier_targets(np.array([[0]]), tl_tree)
        assert stack.planes[0][:, 0, 0].tolist() == [1, 0, 0, 0]
        assert stack.planes[1][:, 0, 0].tolist() == [-1, -1, -1, -1]

    def test_upper_pixel(self, tl_tree):
        stack = mask_to_hier_targets(np.array([[1]]), tl_tree)
        assert stack.planes[0][:, 0, 0].tolist() == [0, 1, 0, 0]
        assert stack.planes[1][:, 0, 0].tolist() == [-1, -1, -1, -1]

    def test_outside_parent_matches_parent_zero(self, tl_tree):
        """-1 appears at child level exactly where the parent plane is 0."""
        mask = np.random.default_rng(0).choice([0, 1, 2, 4, 5, 6, 7], size=(16, 16))
        stack = mask_to_hier_targets(mask, tl_tree)
        tooth = stack.planes[0][3]
        for plane in stack.planes[1]:
            assert np.array_equal(plane == -1, tooth == 0)
        assert np.array_equal((stack.planes[1] == 1).sum(axis=0), tooth)
        assert not (stack.planes[0] == -1).any()

    def test_round_trip(self, tl_tree):
        mask = np.random.default_rng(1).choice([0, 1, 2, 4, 5, 6, 7], size=(8, 8)).astype(np.uint8)
        assert np.array_equal(hier_targets_to_mask(mask_to_hier_targets(mask, tl_tree), tl_tree).data, mask)

    def test_visibility(self, tl_tree):
        stack = mask_to_hier_targets(np.array([[0, 5]]), tl_tree)
        assert stack.visibility(1)[:, 0, :].tolist() == [[0, 1]] * 4

    def test_flat_targets_one_hot(self, tl_tree):
        planes = flat_targets(np.array([[0, 1, 7]]), tl_tree)
        assert planes.shape == (7, 1, 3)
        assert planes.sum(axis=0).tolist() == [[1, 1, 1]]
        assert planes[6, 0, 2] == 1


# ------------------------------------------------------------------
# Class weights and statistics
# ------------------------------------------------------------------


class TestClassWeights:
    """Inverse median frequency per level."""

    def test_hand_example(self):
        weights = inverse_median_frequency(np.array([2, 1, 1]), np.array([4, 4, 4]))
        assert np.allclose(weights, [0.5, 1.0, 1.0])

    def test_equal_frequencies(self):
        assert np.allclose(inverse_median_frequency(np.array([3, 3, 3]), np.array([9, 9, 9])), 1.0)

    def test_zero_frequency_is_substituted(self, caplog):
        with caplog.at_level(logging.WARNING):
            weights = inverse_median_frequency(np.array([4, 2, 0]), np.array([8, 8, 8]))
        assert np.allclose(weights, [0.5, 1.0, 1.0])
        assert "zero frequency" in caplog.text

    def test_counts_exclude_outside_parent(self, tl_tree):
        """Child-level frequencies are relative to Tooth pixels only."""
        mask = np.array([[0, 0, 0, 0], [1, 4, 5, 5], [2, 5, 6, 7]])
        weights = compute_class_weights([mask_to_hier_targets(mask, tl_tree)], tl_tree)
        # level 1 over 6 tooth pixels: Pulp 1, Dentin 3, Enamel 1, Composite 1 -> median 1/6
        assert np.allclose(weights.levels[1], [1.0, 1 / 3, 1.0, 1.0])
        # level 0 over 12 pixels: Background 4, Upper 1, Lower 1, Tooth 6 -> median 2.5/12
        assert np.allclose(weights.levels[0], [2.5 / 4, 2.5, 2.5, 2.5 / 6])

    def test_duplicating_the_dataset_keeps_weights(self, tl_tree):
        mask = np.random.default_rng(2).choice([0, 1, 2, 4, 5, 6, 7], size=(16, 16))
        once = compute_class_weights([mask_to_hier_targets(mask, tl_tree)], tl_tree)
        twice = compute_class_weights([mask_to_hier_targets(mask, tl_tree)] * 2, tl_tree)
        for a, b in zip(once.levels, twice.levels):
            assert np.allclose(a, b)

    def test_empty_split(self, tl_tree):
        with pytest.raises(ValueError, match="empty"):
            compute_class_weights([], tl_tree)

    def test_statistics(self, tl_tree):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[0:2, 0:2] = 5
        mask[5:7, 5:7] = 5
        mask[5:7, 7:9] = 6
        stats = class_statistics([SemanticMask(mask)], tl_tree)
        assert stats["Dentin"]["instances"] == 2
        assert stats["Dentin"]["pixels_per_image"] == 8
        assert stats["Tooth"]["instances"] == 2
        assert stats["Tooth"]["pixels_per_image"] == 12
        assert stats["Tooth"]["pixel_value"] == 3


# ------------------------------------------------------------------
# Folds
# ------------------------------------------------------------------


class TestFolds:
    """Hold-out plus k-fold manifest."""

    def test_default_protocol_counts(self):
        ids = [f"img{i:03d}" for i in range(197)]
        splits = make_folds(ids, k=5, holdout_fraction=0.10, seed=3)
        assert len(splits.test_ids) == 19
        assert sorted(len(splits.val_ids(f)) for f in range(5)) == [35, 35, 36, 36, 36]
        assert sorted(len(splits.train_ids(f)) for f in range(5)) == [142, 142, 142, 143, 143]
        for fold in range(5):
            train, val = splits.split(fold)
            assert not set(train) & set(val)
            assert not set(val) & set(splits.test_ids)

    def test_minimal_case(self):
        splits = make_folds(list("abcde"), k=5, holdout_fraction=0.0)
        assert [len(splits.val_ids(f)) for f in range(5)] == [1] * 5
        assert splits.test_ids == ()

    def test_same_seed_same_split(self):
        ids = [str(i) for i in range(50)]
        assert make_folds(ids, seed=7) == make_folds(ids, seed=7)

    def test_too_few_images(self):
        with pytest.raises(DataValidationError):
            make_folds(["a", "b", "c"], k=5, holdout_fraction=0.0)

    def test_manifest_round_trip(self, tmp_path):
        splits = make_folds([str(i) for i in range(23)], k=3, seed=1)
        save_fold_manifest(splits, tmp_path / "folds.csv")
        assert load_fold_manifest(tmp_path / "folds.csv") == splits

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="prepare"):
            load_fold_manifest(tmp_path / "folds.csv")


# ------------------------------------------------------------------
# prepare
# ------------------------------------------------------------------


def _write_raw(tmp_path, n_images=3):
    images = tmp_path / "raw_images"
    images.mkdir()
    payload = {}
    for index in range(n_images):
        name = f"pano{index}.png"
        Image.fromarray(np.full((32, 32), 40 * index, dtype=np.uint8)).save(images / name)
        regions = []
        for cls, box in (("Dentin", (2, 2, 22, 22)), ("Upper", (0, 24, 32, 32))):
            (x0, y0, x1, y1) = box
            regions.append({
                "shape_attributes": {"name": "polygon", "all_points_x": [x0, x1, x1, x0], "all_points_y": [y0, y0, y1, y1]},
                "region_attributes": {"class": cls},
            })
        payload[name] = {"filename": name, "regions": regions}
    annotations = tmp_path / "annotations"
    annotations.mkdir()
    (annotations / "via.json").write_text(json.dumps(payload))
    return annotations, images


class TestPrepareDataset:
    """Annotations to the prepared on-disk layout."""

    def test_writes_layout(self, tmp_path, tl_tree):
        annotations, images = _write_raw(tmp_path)
        out = tmp_path / "prepared"
        summary = prepare_dataset(annotations, images, out, tl_tree, k=3, holdout_fraction=0.0, progress=False)
        paths = DatasetPaths(out)
        assert summary.image_ids == ["pano0", "pano1", "pano2"]
        assert paths.image_ids() == ["pano0", "pano1", "pano2"]
        mask = np.asarray(Image.open(paths.mask_path("pano0")))
        assert (mask == 5).sum() == 400 and (mask == 1).sum() == 256
        assert load_fold_manifest(paths.folds).k == 3
        weights = json.loads(paths.weights.read_text(encoding="utf-8"))
        assert len(weights["hierarchical"]) == 2 and len(weights["flat"]) == 7
        assert paths.load_tree() == tl_tree

    def test_rerun_is_byte_identical(self, tmp_path, tl_tree):
        annotations, images = _write_raw(tmp_path)
        out = tmp_path / "prepared"
        prepare_dataset(annotations, images, out, tl_tree, k=3, holdout_fraction=0.0, progress=False)
        first = {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}
        prepare_dataset(annotations, images, out, tl_tree, k=3, holdout_fraction=0.0, progress=False)
        second = {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}
        assert first == second

    def test_empty_annotations_leave_no_output(self, tmp_path, tl_tree):
        (tmp_path / "empty").mkdir()
        out = tmp_path / "prepared"
        with pytest.raises(DataValidationError, match="no annotations"):
            prepare_dataset(tmp_path / "empty", tmp_path, out, tl_tree, progress=False)
        assert not out.exists()
