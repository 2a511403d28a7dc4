"""Exporter acceptance: valid bundles, dropout stochasticity, CLI flow."""

import numpy as np
import pytest
import torch

from segtriage.bundle import read_bundle, validate_bundle
from segtriage.cli import main as segtriage_main
from segtriage.scoring import read_scores

from segtriage_exporter.data import make_dataset
from segtriage_exporter.export import export_bundles, mc_probability_stack
from segtriage_exporter.model import ToyDropoutUnet, enable_mc_dropout
from segtriage_exporter.train import (
    ExporterConfig,
    load_checkpoint,
    save_checkpoint,
    train_toy_unet,
)

TOY = ExporterConfig(num_images=8, image_size=16, epochs=1, seed=3)


@pytest.fixture(scope="module")
def trained():
    model, samples = train_toy_unet(TOY)
    return model, samples


class TestModel:
    def test_output_shape(self):
        model = ToyDropoutUnet(num_classes=4, base=4)
        x = torch.zeros(2, 3, 16, 16)
        assert model(x).shape == (2, 4, 16, 16)

    def test_softmax_sums_to_one(self):
        model = ToyDropoutUnet(num_classes=4, base=4)
        model.eval()
        with torch.no_grad():
            p = model.predict_proba(torch.rand(1, 3, 16, 16))
        sums = p.sum(dim=1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


class TestStochasticity:
    def test_dropout_off_passes_identical(self, trained):
        model, samples = trained
        stack = mc_probability_stack(model, samples[0].image, 4, stochastic=False)
        for t in range(1, 4):
            np.testing.assert_array_equal(stack[t], stack[0])

    def test_dropout_on_passes_differ(self, trained):
        model, samples = trained
        torch.manual_seed(11)
        stack = mc_probability_stack(model, samples[0].image, 4, stochastic=True)
        assert any(not np.array_equal(stack[t], stack[0]) for t in range(1, 4))

    def test_mc_mode_keeps_batchnorm_frozen(self, trained):
        model, _ = trained
        enable_mc_dropout(model)
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                assert not module.training
            if isinstance(module, torch.nn.Dropout2d):
                assert module.training


class TestExport:
    def test_exported_bundles_validate(self, trained, tmp_path):
        model, samples = trained
        manifest = export_bundles(model, samples[:4], passes=3, out_dir=tmp_path)
        assert len(manifest["images"]) == 4
        for entry in manifest["images"]:
            with open(tmp_path / entry["file"], "rb") as fh:
                report = validate_bundle(fh)
            assert report.ok, report.violations

    def test_exported_stack_satisfies_sum_invariant(self, trained, tmp_path):
        model, samples = trained
        export_bundles(model, samples[:2], passes=3, out_dir=tmp_path)
        with open(tmp_path / "image-0000.ubnd", "rb") as fh:
            bundle = read_bundle(fh)
        sums = bundle.probabilities.values.astype(np.float64).sum(axis=1)
        assert np.abs(sums - 1.0).max() <= 1e-4
        assert bundle.label is not None
        assert bundle.source_image is not None

    def test_checkpoint_roundtrip(self, trained, tmp_path):
        model, samples = trained
        path = tmp_path / "toy.pt"
        save_checkpoint(model, TOY, path)
        restored = load_checkpoint(path)
        x = torch.rand(1, 3, 16, 16)
        model.eval()
        restored.eval()
        with torch.no_grad():
            np.testing.assert_allclose(
                restored(x).numpy(), model(x).numpy(), atol=1e-6
            )


class TestEndToEnd:
    def test_exported_corpus_flows_through_cmd_score(self, trained, tmp_path):
        model, _ = trained
        samples = make_dataset(6, 16, seed=9)
        corpus = tmp_path / "corpus"
        export_bundles(model, samples, passes=3, out_dir=corpus)
        assert segtriage_main(["validate", "--input", str(corpus)]) == 0
        scores_path = tmp_path / "scores.csv"
        assert (
            segtriage_main(
                ["score", "--input", str(corpus), "--output", str(scores_path)]
            )
            == 0
        )
        scores, class_names = read_scores(scores_path)
        assert len(scores) == 6
        assert class_names == ["background", "disk", "box", "band"]
        for score in scores:
            assert score.mean_dice is not None  # labels shipped in the bundles
