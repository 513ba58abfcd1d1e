"""CNN topology, training guards, checkpoint round trips."""
import json
import logging
import zipfile

import numpy as np
import pytest
import torch

from blinklab.classifier import (
    Checkpoint,
    ModelConfig,
    TrainConfig,
    build_model,
    dataset_fingerprint,
    load_training_set,
    predict,
    train,
)
from blinklab.errors import (
    ConfigViolation,
    EmptyDataset,
    ShapeMismatch,
    SingleClassDataset,
)
from blinklab.eyes import mirror_crop
from blinklab.synthdata import make_crop_set


@pytest.fixture(scope="module")
def small_checkpoint():
    crops, labels = make_crop_set(60, seed=11)
    return train(crops, labels, TrainConfig(epochs=2, seed=11)), crops, labels


class TestBuildModel:
    def test_forward_shape_and_range(self):
        model = build_model()
        out = model(torch.rand(4, 3, 50, 50))
        assert out.shape == (4,)
        assert bool(((out > 0) & (out < 1)).all())

    def test_architecture_parameter_shapes(self):
        state = build_model().state_dict()
        conv_shapes = [tuple(v.shape) for k, v in state.items() if "features" in k and k.endswith("weight")]
        assert conv_shapes == [(32, 3, 3, 3), (32, 32, 3, 3), (64, 32, 3, 3)]
        dense_shapes = [tuple(v.shape) for k, v in state.items() if "classifier" in k and k.endswith("weight")]
        # 50 -> 25 -> 12 -> 6 after three pools, so the flatten is 64*6*6
        assert dense_shapes == [(64, 64 * 6 * 6), (1, 64)]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"conv_filters": (32, 32)},
            {"conv_filters": (32, 32, 64, 64)},
            {"pool_stages": 2},
            {"kernel": 2},
            {"kernel": -3},
            {"dropout_rate": 1.0},
            {"dropout_rate": -0.1},
            {"dense_units": 0},
            {"input_size": (4, 50, 3)},
            {"input_size": (50, 4, 3)},
            {"input_size": (50, 50, 0)},
        ],
    )
    def test_rejected_configs(self, kwargs):
        with pytest.raises(ConfigViolation):
            build_model(ModelConfig(**kwargs))


class TestPredict:
    def test_single_crop_returns_float(self):
        model = build_model()
        score = predict(model, np.full((50, 50, 3), 0.5, dtype=np.float32))
        assert isinstance(score, float)
        assert 0.0 < score < 1.0

    def test_batch_returns_array(self):
        model = build_model()
        scores = predict(model, np.random.default_rng(0).random((7, 50, 50, 3)))
        assert scores.shape == (7,)

    def test_deterministic_in_eval_mode(self):
        model = build_model()
        x = np.random.default_rng(1).random((3, 50, 50, 3)).astype(np.float32)
        np.testing.assert_array_equal(predict(model, x), predict(model, x))

    @pytest.mark.parametrize(
        "bad",
        [
            np.zeros((50, 50)),
            np.zeros((2, 48, 48, 3)),
            np.full((1, 50, 50, 3), 1.5),
            np.full((1, 50, 50, 3), -0.1),
            np.full((1, 50, 50, 3), np.nan),
        ],
    )
    def test_bad_crops_rejected(self, bad):
        with pytest.raises(ShapeMismatch):
            predict(build_model(), bad)


class TestTrain:
    def test_learns_to_separate(self, trained_checkpoint):
        xs, ys = make_crop_set(200, seed=99)
        scores = trained_checkpoint.predict(xs)
        assert scores[ys == 1].mean() - scores[ys == 0].mean() > 0.5

    def test_checkpoint_metadata(self, small_checkpoint):
        ckpt, crops, labels = small_checkpoint
        assert ckpt.mode == "shared"
        assert set(ckpt.weights.keys()) == {"shared"}
        assert ckpt.dataset_fingerprint == dataset_fingerprint(
            crops.astype(np.float32), labels.astype(np.int64)
        )
        assert len(ckpt.history) >= 1
        assert {"epoch", "train_loss", "val_loss", "val_accuracy"} <= set(ckpt.history[0])

    def test_deviation_from_reference_setup_logged(self, caplog):
        crops, labels = make_crop_set(20, seed=5)
        with caplog.at_level(logging.WARNING, logger="blinklab.classifier"):
            train(crops, labels, TrainConfig(epochs=1, batch_size=32, seed=0))
        assert "deviates" in caplog.text

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train(np.zeros((0, 50, 50, 3), dtype=np.float32), np.zeros(0))

    def test_length_mismatch(self):
        crops, _ = make_crop_set(6, seed=0)
        with pytest.raises(ShapeMismatch):
            train(crops, np.zeros(5))

    def test_single_class(self):
        crops, _ = make_crop_set(6, seed=0)
        with pytest.raises(SingleClassDataset):
            train(crops, np.ones(6))

    def test_unknown_mode(self):
        crops, labels = make_crop_set(6, seed=0)
        with pytest.raises(ConfigViolation):
            train(crops, labels, TrainConfig(epochs=1), mode="ensemble")

    def test_per_eye_requires_sides(self):
        crops, labels = make_crop_set(6, seed=0)
        with pytest.raises(ConfigViolation):
            train(crops, labels, TrainConfig(epochs=1), mode="per_eye")

    def test_per_eye_single_class_side(self):
        crops, _ = make_crop_set(8, seed=0)
        with pytest.raises(SingleClassDataset):
            train(
                crops,
                np.array([0, 0, 0, 0, 1, 1, 1, 1]),
                TrainConfig(epochs=1),
                sides=["left"] * 4 + ["right"] * 4,  # left side sees only opens
                mode="per_eye",
            )

    def test_per_eye_trains_both_sides(self):
        crops, labels = make_crop_set(24, seed=2)
        sides = (["left", "right"] * 12)[:24]
        ckpt = train(crops, labels, TrainConfig(epochs=1, seed=2), sides=sides, mode="per_eye")
        assert set(ckpt.weights.keys()) == {"left", "right"}
        assert {h["side"] for h in ckpt.history} == {"left", "right"}

    def test_shared_mode_mirrors_right_side_crops(self):
        crops, labels = make_crop_set(24, seed=7)
        mirrored = np.stack([mirror_crop(c) for c in crops])
        cfg = TrainConfig(epochs=1, seed=7)
        via_sides = train(crops, labels, cfg, sides=["right"] * 24)
        via_manual = train(mirrored, labels, cfg)
        for key in via_sides.weights["shared"]:
            np.testing.assert_array_equal(
                via_sides.weights["shared"][key], via_manual.weights["shared"][key]
            )


class TestCheckpoint:
    def test_round_trip(self, small_checkpoint, tmp_path):
        ckpt, crops, _ = small_checkpoint
        p = tmp_path / "model.blink"
        ckpt.save(p)
        loaded = Checkpoint.load(p)
        assert loaded.mode == ckpt.mode
        assert loaded.model_config == ckpt.model_config
        assert loaded.train_config == ckpt.train_config
        assert loaded.history == ckpt.history
        assert loaded.dataset_fingerprint == ckpt.dataset_fingerprint
        for key in ckpt.weights["shared"]:
            np.testing.assert_array_equal(
                loaded.weights["shared"][key], ckpt.weights["shared"][key]
            )
        np.testing.assert_allclose(
            loaded.predict(crops[:10]), ckpt.predict(crops[:10]), atol=1e-7
        )

    def test_metadata_json_inside_archive(self, small_checkpoint, tmp_path):
        ckpt, _, _ = small_checkpoint
        p = tmp_path / "model.blink"
        ckpt.save(p)
        with zipfile.ZipFile(p) as zf:
            meta = json.loads(zf.read("model.json"))
        assert meta["format_version"] == 1
        assert meta["normalization"] == "unit_range"
        assert meta["weight_sets"] == ["shared"]

    def test_newer_format_rejected(self, small_checkpoint, tmp_path):
        ckpt, _, _ = small_checkpoint
        p = tmp_path / "model.blink"
        ckpt.save(p)
        with zipfile.ZipFile(p) as zf:
            meta = json.loads(zf.read("model.json"))
            weights = zf.read("weights.npz")
        meta["format_version"] = 2
        p2 = tmp_path / "future.blink"
        with zipfile.ZipFile(p2, "w") as zf:
            zf.writestr("model.json", json.dumps(meta))
            zf.writestr("weights.npz", weights)
        with pytest.raises(ConfigViolation):
            Checkpoint.load(p2)

    def test_shared_mode_right_eye_uses_mirror(self, small_checkpoint):
        ckpt, crops, _ = small_checkpoint
        crop = crops[0]
        assert ckpt.predict(crop, side="right") == pytest.approx(
            ckpt.predict(mirror_crop(crop), side="left"), abs=1e-7
        )


class TestLoadTrainingSet:
    def test_counts_and_labels(self, built_dataset):
        root, _ = built_dataset
        crops, labels, groups, sides = load_training_set(root)
        # 4 blink samples contribute center +/- 1 x 2 eyes; 4 negatives all 21
        assert len(crops) == 4 * 3 * 2 + 4 * 21 * 2
        assert crops.shape[1:] == (50, 50, 3) and crops.dtype == np.float32
        assert int(labels.sum()) == 24
        assert len(np.unique(groups)) == 8
        assert set(sides) == {"left", "right"}
        assert crops.min() >= 0.0 and crops.max() <= 1.0

    def test_empty_root(self, tmp_path):
        with pytest.raises(EmptyDataset):
            load_training_set(tmp_path)
