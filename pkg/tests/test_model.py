"""FiLM, backbones, segmenters, parameter accounting and checkpoints."""

from __future__ import annotations

import pytest
import torch

from conftest import TL_CLASS_MAP, TL_CLASS_TREE
from hierarchy import parse_class_tree
from model import (
    BackboneFactory,
    BaseBackbone,
    ExternalBackbone,
    FiLMGenerator,
    FlatSegmenter,
    HierarchicalSegmenter,
    ModelConfig,
    TinyUNet,
    build_model,
    class_probabilities,
    film_condition,
    load_checkpoint,
    parameter_report,
    save_checkpoint,
)
from model.backbones.external import import_object
from model.film import summarize
from model.segmenter import format_parameter_report
from utils.errors import CheckpointMismatchError, ConfigError


@pytest.fixture
def hier_model(tl_tree):
    torch.manual_seed(0)
    return build_model(ModelConfig(), tl_tree).eval()


@pytest.fixture
def image():
    return torch.rand(2, 1, 16, 16, generator=torch.Generator().manual_seed(0))


# ------------------------------------------------------------------
# FiLM
# ------------------------------------------------------------------


class TestFiLM:
    """Parent-summary conditioning of trunk features."""

    def test_fresh_generator_is_identity(self):
        generator = FiLMGenerator(parent_classes=4, feature_channels=16)
        features = torch.randn(2, 16, 5, 5)
        out = film_condition(features, torch.rand(2, 4, 5, 5), generator)
        assert torch.allclose(out, features)

    def test_scale_and_shift(self):
        generator = FiLMGenerator(parent_classes=2, feature_channels=3)
        with torch.no_grad():
            generator.net[-1].bias.fill_(1.0)  # delta gamma = 1, beta = 1
        features = torch.randn(1, 3, 4, 4)
        out = film_condition(features, torch.rand(1, 2, 4, 4), generator)
        assert torch.allclose(out, 2 * features + 1)

    def test_summary_is_spatial_mean(self):
        probs = torch.full((1, 4, 6, 6), 0.3)
        assert torch.allclose(summarize(probs), torch.full((1, 4), 0.3))

    def test_shape_checks(self):
        generator = FiLMGenerator(parent_classes=4, feature_channels=16)
        with pytest.raises(ValueError, match="parent classes"):
            film_condition(torch.randn(1, 16, 4, 4), torch.rand(1, 3, 4, 4), generator)
        with pytest.raises(ValueError, match="channels"):
            film_condition(torch.randn(1, 8, 4, 4), torch.rand(1, 4, 4, 4), generator)


# ------------------------------------------------------------------
# Backbones
# ------------------------------------------------------------------


class TestBackbones:
    """Backbone registry and the contract every trunk honours."""

    def test_supported(self):
        assert BackboneFactory.get_supported_backbones() == ["tiny", "external"]

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="Unsupported backbone: resnet"):
            BackboneFactory.create_backbone("resnet")

    def test_tiny_keeps_resolution(self):
        trunk = TinyUNet()
        out = trunk(torch.rand(1, 8, 17, 23))
        assert out.shape == (1, 16, 17, 23)

    def test_tiny_has_no_running_statistics(self):
        """Train and eval mode agree, whatever the trunk saw before."""
        torch.manual_seed(0)
        trunk = TinyUNet()
        x = torch.rand(2, 8, 16, 16)
        trunk.train()
        trunk(torch.randn(2, 8, 16, 16) * 50.0)
        train_out = trunk(x)
        trunk.eval()
        with torch.no_grad():
            eval_out = trunk(x)
        assert torch.allclose(eval_out, train_out, atol=1e-6)
        assert not any("running" in name for name, _ in trunk.named_buffers())

    def test_segmenter_eval_matches_train_mode(self, tl_tree, image):
        torch.manual_seed(0)
        model = build_model(ModelConfig(), tl_tree)
        with torch.no_grad():
            model.train()
            trained = model(image)
            model.eval()
            evaluated = model(image)
        for a, b in zip(trained.restricted_probs, evaluated.restricted_probs):
            assert torch.allclose(a, b, atol=1e-6)

    def test_tiny_rejects_wrong_channels(self):
        with pytest.raises(ValueError, match="input channels"):
            TinyUNet()(torch.rand(1, 3, 8, 8))

    def test_external_identity(self):
        trunk = BackboneFactory.create_backbone(
            "external", target="torch.nn:Identity", in_channels=8, feature_channels=8, pass_in_channels=False
        )
        x = torch.rand(1, 8, 4, 4)
        assert torch.equal(trunk(x), x)

    def test_external_bad_output(self):
        trunk = ExternalBackbone("torch.nn:Identity", in_channels=8, feature_channels=16, pass_in_channels=False)
        with pytest.raises(ValueError, match="expected 16 channels"):
            trunk(torch.rand(1, 8, 4, 4))

    @pytest.mark.parametrize("path", ["nomodule", "no_such_package_xyz:Net", "torch.nn:NoSuchLayer"])
    def test_import_errors(self, path):
        with pytest.raises(ConfigError):
            import_object(path)

    def test_build_model_wraps_backbone_errors(self, tl_tree):
        with pytest.raises(ConfigError, match="cannot build backbone"):
            build_model(ModelConfig(backbone="resnet"), tl_tree)
        with pytest.raises(ConfigError):
            build_model(ModelConfig(backbone_kwargs={"widths": (8, 16)}), tl_tree)


# ------------------------------------------------------------------
# Hierarchical forward pass
# ------------------------------------------------------------------


class TestHierarchicalSegmenter:
    """One shared trunk, per-level adapters and heads."""

    def test_output_shapes(self, hier_model, image):
        with torch.no_grad():
            pyramid = hier_model(image)
        assert pyramid.depth == 2
        for level, names in enumerate(hier_model.tree.levels):
            for maps in (pyramid.logits, pyramid.probs, pyramid.restricted_probs, pyramid.restricted_logits):
                assert maps[level].shape == (2, len(names), 16, 16)
        assert pyramid.conditionals[0] is None
        assert pyramid.restriction_masks[1].dtype == torch.bool

    def test_single_trunk(self, hier_model):
        assert sum(isinstance(m, BaseBackbone) for m in hier_model.modules()) == 1
        assert len(hier_model.adapters) == len(hier_model.heads) == 2
        assert hier_model.adapters[0].in_channels == 1
        assert hier_model.adapters[1].in_channels == 1 + 4

    def test_children_bounded_by_parent(self, hier_model, image):
        with torch.no_grad():
            pyramid = hier_model(image)
        tooth = pyramid.probs[0][:, 3:4]
        assert (pyramid.probs[1] <= tooth + 1e-6).all()
        assert torch.allclose(pyramid.probs[1].sum(dim=1, keepdim=True), tooth, atol=1e-5)

    def test_absent_parent_zeroes_children(self, hier_model, image):
        with torch.no_grad():
            hier_model.heads[0].weight[3].zero_()
            hier_model.heads[0].bias[3] = -30.0
            pyramid = hier_model(image)
        assert not pyramid.restricted_probs[1].any()
        assert (pyramid.restricted_logits[1] == -1e4).all()
        assert not pyramid.restriction_masks[1].any()

    def test_depth_and_input_checks(self, hier_model, image):
        with pytest.raises(ValueError, match="cannot run 3"):
            hier_model.hier_forward(image, depth=3)
        with pytest.raises(ValueError, match="B×1×H×W"):
            hier_model(torch.rand(2, 3, 16, 16))

    def test_partial_depth_and_trace(self, hier_model, image):
        with torch.no_grad():
            pyramid, trace = hier_model.hier_forward(image, depth=1, trace=True)
        assert pyramid.depth == 1
        assert len(trace.features) == 1
        assert trace.adapter_inputs[0] is image

    def test_feedback_uses_restricted_logits(self, hier_model, image):
        with torch.no_grad():
            pyramid, trace = hier_model.hier_forward(image, trace=True)
        assert torch.equal(trace.adapter_inputs[1][:, 1:], pyramid.restricted_logits[0])

    def test_gradient_reaches_root_logits(self, tl_tree, image):
        torch.manual_seed(1)
        model = build_model(ModelConfig(), tl_tree)
        pyramid = model(image)
        pyramid.logits[0].retain_grad()
        pyramid.probs[1].sum().backward()
        assert pyramid.logits[0].grad is not None
        assert pyramid.logits[0].grad[:, 3].abs().sum() > 0

    def test_without_film(self, tl_tree, image):
        model = build_model(ModelConfig(film=False), tl_tree).eval()
        assert len(model.film) == 0
        with torch.no_grad():
            assert model(image).depth == 2


# ------------------------------------------------------------------
# Flat baseline
# ------------------------------------------------------------------


class TestFlatSegmenter:
    """Softmax over leaf classes."""

    def test_leaf_outputs(self, tl_tree, image):
        model = build_model(ModelConfig(hierarchical=False), tl_tree).eval()
        assert isinstance(model, FlatSegmenter)
        with torch.no_grad():
            out = model(image)
        assert out.probs.shape == (2, 7, 16, 16)
        assert torch.allclose(out.probs.sum(dim=1), torch.ones(2, 16, 16), atol=1e-5)

    def test_class_probabilities_sum_leaves(self, tl_tree, image):
        model = build_model(ModelConfig(hierarchical=False), tl_tree).eval()
        with torch.no_grad():
            out = model(image)
        full = class_probabilities(out, tl_tree)
        assert full.shape == (2, len(tl_tree), 16, 16)
        tooth = list(tl_tree.names).index("Tooth")
        assert torch.allclose(full[:, tooth], out.probs[:, 3:].sum(dim=1))

    def test_class_probabilities_of_pyramid(self, hier_model, image, tl_tree):
        with torch.no_grad():
            pyramid = hier_model(image)
        full = class_probabilities(pyramid, tl_tree)
        assert torch.equal(full[:, 4:], pyramid.restricted_probs[1])


# ------------------------------------------------------------------
# Parameter accounting
# ------------------------------------------------------------------


class TestParameterReport:
    """The wrapper adds little on top of the trunk."""

    def test_counts(self, hier_model):
        report = parameter_report(hier_model)
        assert report["trunk"] == 118_064
        assert report["adapters"] == 64
        assert report["heads"] == 136
        assert report["film"] == 624
        assert report["overhead"] == 824
        assert report["overhead"] / report["trunk"] < 0.01
        assert report["total"] == sum(p.numel() for p in hier_model.parameters())

    def test_deterministic(self, tl_tree):
        first = parameter_report(build_model(ModelConfig(), tl_tree))
        second = parameter_report(build_model(ModelConfig(), tl_tree))
        assert first == second

    def test_flat_counts(self, tl_tree):
        report = parameter_report(build_model(ModelConfig(hierarchical=False), tl_tree))
        assert report["film"] == 0
        assert report["heads"] == 16 * 7 + 7

    def test_format(self, hier_model):
        text = format_parameter_report(parameter_report(hier_model))
        assert "118,064" in text
        assert "overhead %" in text


# ------------------------------------------------------------------
# Checkpoints
# ------------------------------------------------------------------


class TestCheckpoint:
    """Save and reload tagged with the hierarchy fingerprint."""

    def test_round_trip(self, tmp_path, hier_model, tl_tree, image):
        path = save_checkpoint(tmp_path / "best.pt", hier_model, ModelConfig(), tl_tree, epoch=3)
        restored, payload = load_checkpoint(path, tl_tree)
        restored.eval()
        assert isinstance(restored, HierarchicalSegmenter)
        assert payload["epoch"] == 3
        with torch.no_grad():
            a = hier_model(image).restricted_probs[1]
            b = restored(image).restricted_probs[1]
        assert torch.equal(a, b)

    def test_other_hierarchy_rejected(self, tmp_path, hier_model, tl_tree):
        path = save_checkpoint(tmp_path / "best.pt", hier_model, ModelConfig(), tl_tree)
        other = parse_class_tree(
            TL_CLASS_TREE.replace("Composite", "Filling"), TL_CLASS_MAP.replace("Composite", "Filling")
        )
        with pytest.raises(CheckpointMismatchError, match="Filling"):
            load_checkpoint(path, other)

    def test_missing_file(self, tmp_path, tl_tree):
        with pytest.raises(FileNotFoundError, match="Train a model first"):
            load_checkpoint(tmp_path / "absent.pt", tl_tree)
