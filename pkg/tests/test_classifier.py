"""Synthetic dataset, surrogate training, gradients, crop classification."""

import numpy as np
import pytest

import stripeforge as sf
from stripeforge.classifier import (SignDataset, classify_crop_proba,
                                    cross_entropy, resize_bilinear)
from stripeforge.errors import ConfigError, DomainError

from conftest import GT_CLASS, MODEL_SEED


class TestDataset:
    def test_deterministic(self, dataset):
        again = sf.generate_dataset(sf.SignDatasetSpec(seed=MODEL_SEED))
        assert np.array_equal(dataset.images, again.images)
        assert np.array_equal(dataset.labels, again.labels)

    def test_size_and_balance(self):
        spec = sf.SignDatasetSpec(samples_per_class=100, seed=1)
        ds = sf.generate_dataset(spec)
        assert ds.images.shape == (800, 32, 32, 3)
        assert np.all(np.bincount(ds.labels) == 100)
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0

    def test_classes_separable_in_mean(self, dataset):
        means = np.stack([dataset.images[dataset.labels == c].mean(axis=0)
                          for c in range(8)])
        for i in range(8):
            for j in range(i + 1, 8):
                l1 = np.abs(means[i] - means[j]).mean()
                assert l1 >= 0.02, f"classes {i},{j} too close: {l1:.4f}"


class TestTraining:
    def test_holdout_accuracy(self, model):
        assert model.meta["holdout_accuracy"] >= 0.95

    def test_two_class_separable_subset(self, dataset):
        mask = dataset.labels < 2
        sub = SignDataset(dataset.images[mask], dataset.labels[mask])
        m = sf.train(sub, sf.TrainConfig(epochs=40), seed=0)
        assert m.meta["holdout_accuracy"] == 1.0

    def test_shuffled_labels_reach_chance_level(self, dataset):
        rng = np.random.default_rng(0)
        shuffled = SignDataset(dataset.images, rng.permutation(dataset.labels))
        m = sf.train(shuffled, sf.TrainConfig(epochs=30), seed=0)
        assert abs(m.meta["holdout_accuracy"] - 1 / 8) <= 0.1
        assert not m.meta["converged"]

    def test_deterministic_given_seed(self, dataset):
        cfg = sf.TrainConfig(epochs=10)
        m1 = sf.train(dataset, cfg, seed=5)
        m2 = sf.train(dataset, cfg, seed=5)
        assert all(np.array_equal(a, b)
                   for a, b in zip(m1.weights, m2.weights))


class TestPredict:
    def test_probability_vector_normalized(self, model, dataset):
        for img in dataset.images[:20]:
            _, p = model.predict(img)
            assert p.shape == (8,)
            assert abs(p.sum() - 1.0) < 1e-6
            assert p.min() >= 0.0

    def test_saturated_inputs_still_normalized(self, model):
        for img in (np.zeros((32, 32, 3)), np.ones((32, 32, 3))):
            cls, p = model.predict(img)
            assert 0 <= cls < 8
            assert abs(p.sum() - 1.0) < 1e-6

    def test_training_images_confident(self, model, dataset):
        correct_confident = 0
        for img, label in zip(dataset.images[:400], dataset.labels[:400]):
            cls, p = model.predict(img)
            if cls == label and p[cls] > 0.5:
                correct_confident += 1
        assert correct_confident >= 0.95 * 400

    def test_shape_mismatch_rejected(self, model):
        with pytest.raises(DomainError):
            model.predict(np.zeros((16, 16, 3)))


class TestInputGradient:
    def test_matches_central_finite_differences(self, model, dataset):
        img = dataset.images[3].copy()
        grad = sf.input_gradient(model, img, target_k=4)
        rng = np.random.default_rng(0)
        h = 1e-4
        flat = img.reshape(-1)
        idx = rng.choice(flat.size, size=100, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = cross_entropy(model.predict_proba(img), 4)
            flat[i] = orig - h
            dn = cross_entropy(model.predict_proba(img), 4)
            flat[i] = orig
            fd = (up - dn) / (2 * h)
            an = grad.reshape(-1)[i]
            assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-8)

    def test_loss_decreases_along_negative_gradient(self, model, dataset):
        img = dataset.images[0]
        k = int(dataset.labels[0])
        grad = sf.input_gradient(model, img, target_k=k)
        loss0 = cross_entropy(model.predict_proba(img), k)
        stepped = np.clip(img - 1e-3 * grad, 0, 1)
        assert cross_entropy(model.predict_proba(stepped), k) <= loss0

    def test_gradient_scales_linearly_with_loss(self, model, dataset):
        # d(2*loss)/dx via finite differences equals 2 * input_gradient
        img = dataset.images[5].copy()
        grad = sf.input_gradient(model, img, target_k=1)
        h = 1e-4
        flat = img.reshape(-1)
        for i in (10, 500, 2500):
            orig = flat[i]
            flat[i] = orig + h
            up = 2 * cross_entropy(model.predict_proba(img), 1)
            flat[i] = orig - h
            dn = 2 * cross_entropy(model.predict_proba(img), 1)
            flat[i] = orig
            fd = (up - dn) / (2 * h)
            assert fd == pytest.approx(2 * grad.reshape(-1)[i], rel=1e-3)


class TestClassifyCrop:
    def test_crop_at_input_size_equals_predict(self, model, dataset):
        img = dataset.images[7]
        assert sf.classify_crop(model, img) == model.predict(img)[0]

    def test_clean_crops_at_scene_scales(self, model):
        # textures drawn at run-time crop resolutions, ambient-lit
        rng = np.random.default_rng(4)
        total = hits = 0
        for cls in range(8):
            for size in (96, 150, 240, 360):
                tex = sf.draw_sign_texture(cls, size)
                crop = tex * rng.uniform(0.22, 0.9)
                hits += sf.classify_crop(model, crop) == cls
                total += 1
        assert hits == total

    def test_resize_roundtrip_stability(self, model):
        rng = np.random.default_rng(9)
        agree = total = 0
        for cls in range(8):
            for _ in range(13):
                size = int(rng.integers(64, 300))
                crop = sf.draw_sign_texture(cls, size) * rng.uniform(0.25, 1.0)
                up = resize_bilinear(crop, size * 2, size * 2)
                down = resize_bilinear(up, size, size)
                agree += (sf.classify_crop(model, crop)
                          == sf.classify_crop(model, down))
                total += 1
        assert agree / total >= 0.99

    def test_empty_crop_rejected(self, model):
        with pytest.raises(DomainError):
            classify_crop_proba(model, np.zeros((0, 0, 3)))


class TestSerialization:
    def test_round_trip_preserves_predictions(self, model, dataset, tmp_path):
        path = tmp_path / "surrogate.sgm"
        sf.save_model(model, path)
        loaded = sf.load_model(path)
        assert loaded.layer_sizes == model.layer_sizes
        for img in dataset.images[:50]:
            a, pa = model.predict(img)
            b, pb = loaded.predict(img)
            assert a == b
            np.testing.assert_allclose(pa, pb, atol=1e-4)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.sgm"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigError):
            sf.load_model(path)
