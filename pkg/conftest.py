"""Shared fixtures. Lives at the repository root so the top-level packages import."""

from __future__ import annotations

import pytest

from dataprep.prepare import write_splits_and_weights
from dataprep.dataset import DatasetPaths
from dataprep.synthetic import SyntheticSpec, generate
from hierarchy import parse_class_tree

TL_CLASS_MAP = (
    "Background,0\n"
    "Upper,1\n"
    "Lower,2\n"
    "Tooth,3\n"
    "Pulp,4\n"
    "Dentin,5\n"
    "Enamel,6\n"
    "Composite,7\n"
)

TL_CLASS_TREE = """{
    "Background": {},
    "Upper": {},
    "Lower": {},
    "Tooth": {
        "Pulp": {},
        "Dentin": {},
        "Enamel": {},
        "Composite": {}
    }
}
"""


@pytest.fixture
def tl_map_text() -> str:
    return TL_CLASS_MAP


@pytest.fixture
def tl_tree_text() -> str:
    return TL_CLASS_TREE


@pytest.fixture
def tl_tree():
    return parse_class_tree(TL_CLASS_TREE, TL_CLASS_MAP)


@pytest.fixture
def synthetic_spec() -> SyntheticSpec:
    return SyntheticSpec(image_size=32, n_images=12, n_children=3, noise=0.0, seed=0)


@pytest.fixture
def synthetic_root(tmp_path, synthetic_spec):
    """A prepared synthetic dataset with 3 folds and a test holdout."""
    root = tmp_path / "synthetic"
    dataset = generate(synthetic_spec, root)
    write_splits_and_weights(DatasetPaths(root), dataset.tree, k=3, holdout_fraction=0.1, seed=0)
    return root
