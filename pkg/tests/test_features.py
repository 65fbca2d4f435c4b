import numpy as np
import pytest

from orthoflow import FeatureMap, GrayImage, avg_pool_2x2, build_pyramid, extract_features
from orthoflow.features import RAW_CHANNELS


def _textured_image(seed, shape=(64, 64)):
    rng = np.random.default_rng(seed)
    return GrayImage(rng.uniform(0.0, 1.0, shape))


def _pool8_oracle(img, i, j):
    return np.mean(img[8 * i : 8 * i + 8, 8 * j : 8 * j + 8])


def _descriptor_oracle(img, i, j):
    """Straight-line raw descriptor at one interior pooled cell."""
    h8, w8 = img.shape[0] // 8, img.shape[1] // 8
    pooled = np.array([[_pool8_oracle(img, a, b) for b in range(w8)] for a in range(h8)])
    gx = (
        pooled[i - 1, j + 1] + 2 * pooled[i, j + 1] + pooled[i + 1, j + 1]
        - pooled[i - 1, j - 1] - 2 * pooled[i, j - 1] - pooled[i + 1, j - 1]
    )
    gy = (
        pooled[i + 1, j - 1] + 2 * pooled[i + 1, j] + pooled[i + 1, j + 1]
        - pooled[i - 1, j - 1] - 2 * pooled[i - 1, j] - pooled[i - 1, j + 1]
    )
    patch = [pooled[i + dy, j + dx] for dy in range(-2, 3) for dx in range(-2, 3)]
    return np.array([pooled[i, j], gx, gy] + patch)


class TestExtractFeatures:
    def test_constant_image_gives_identical_flat_descriptors(self):
        image = GrayImage(np.full((64, 64), 0.4))
        feats = extract_features(image, normalize=False, dtype=np.float64)
        assert feats.channels == 32
        # gradient channels exactly zero, all descriptors identical
        np.testing.assert_array_equal(feats.data[..., 1], 0.0)
        np.testing.assert_array_equal(feats.data[..., 2], 0.0)
        first = feats.data[0, 0]
        np.testing.assert_array_equal(feats.data, np.broadcast_to(first, feats.data.shape))

    def test_constant_image_normalizes_to_zero_vectors(self):
        image = GrayImage(np.full((64, 64), 0.4))
        feats = extract_features(image, dtype=np.float64)
        np.testing.assert_array_equal(feats.data, 0.0)

    def test_integer_shift_moves_descriptors_one_cell(self):
        # two crops of one wider image differ by an exact 8-px shift;
        # interior raw descriptors must be bit-identical one cell over
        rng = np.random.default_rng(1)
        wide = rng.uniform(0.0, 1.0, (64, 64 + 8))
        a = extract_features(GrayImage(wide[:, :64]), normalize=False, dtype=np.float64)
        b = extract_features(GrayImage(wide[:, 8:]), normalize=False, dtype=np.float64)
        np.testing.assert_array_equal(b.data[2:-2, 2:-3], a.data[2:-2, 3:-2])

    def test_interior_descriptor_matches_oracle(self):
        image = _textured_image(2)
        feats = extract_features(image, normalize=False, dtype=np.float64)
        got = feats.data[3, 4]
        expected = _descriptor_oracle(image.data, 3, 4)
        np.testing.assert_allclose(got[:RAW_CHANNELS], expected, atol=1e-6)
        np.testing.assert_array_equal(got[RAW_CHANNELS:], 0.0)

    def test_normalization_centers_and_unit_norms(self):
        image = _textured_image(3)
        raw = extract_features(image, normalize=False, dtype=np.float64).data
        normed = extract_features(image, dtype=np.float64).data
        centered = raw - raw.mean(axis=(0, 1))
        expected = centered / np.linalg.norm(centered, axis=-1, keepdims=True)
        np.testing.assert_allclose(normed, expected, atol=1e-12)

    def test_unit_norms_within_tolerance(self):
        feats = extract_features(_textured_image(4), dtype=np.float32)
        norms = np.linalg.norm(feats.data.astype(np.float64), axis=-1)
        nonzero = norms[norms > 0]
        np.testing.assert_allclose(nonzero, 1.0, atol=1e-5)

    def test_shift_equivariance_self_correlation(self):
        # raw descriptors shift bit-exactly (tested above); the normalized
        # ones additionally see the global channel means, which depend on
        # the border content and so differ slightly between the two images
        rng = np.random.default_rng(5)
        noise = rng.uniform(0.0, 1.0, (64, 256))
        p = np.pad(noise, 2, mode="wrap")
        img = np.zeros((64, 256))
        for a_ in range(5):
            for b_ in range(5):
                img += p[a_ : a_ + 64, b_ : b_ + 256]
        img /= 25
        rolled = np.roll(img, 16, axis=1)
        a = extract_features(GrayImage(img), dtype=np.float64).data
        b = extract_features(GrayImage(rolled), dtype=np.float64).data
        cos = np.sum(a[3:-3, 3:-5] * b[3:-3, 5:-3], axis=-1)
        assert cos.size > 0
        assert np.abs(cos - 1.0).max() < 5e-3

    def test_determinism(self):
        image = _textured_image(6)
        a = extract_features(image)
        b = extract_features(image)
        np.testing.assert_array_equal(a.data, b.data)

    def test_small_dim_truncates(self):
        feats = extract_features(_textured_image(7), dim=8, normalize=False)
        assert feats.channels == 8

    def test_rejects_small_or_unaligned_images(self):
        with pytest.raises(ValueError, match="image too small"):
            extract_features(GrayImage(np.zeros((16, 64))))
        with pytest.raises(ValueError, match="multiples of 32"):
            extract_features(GrayImage(np.zeros((64, 65))))


class TestBuildPyramid:
    def test_constant_levels(self):
        level0 = FeatureMap(np.full((8, 8, 3), 1.25))
        pyr = build_pyramid(level0)
        np.testing.assert_array_equal(pyr.level1.data, 1.25)
        np.testing.assert_array_equal(pyr.level2.data, 1.25)

    def test_shapes(self):
        pyr = build_pyramid(FeatureMap(np.zeros((8, 8, 2))))
        assert (pyr.level1.height, pyr.level1.width) == (4, 4)
        assert (pyr.level2.height, pyr.level2.width) == (2, 2)

    def test_level2_matches_composed_pooling_oracle(self):
        rng = np.random.default_rng(8)
        data = rng.standard_normal((8, 8, 2))
        pyr = build_pyramid(FeatureMap(data))
        expected = avg_pool_2x2(avg_pool_2x2(FeatureMap(data))).data
        np.testing.assert_array_equal(pyr.level2.data, expected)
        # and agrees with a flat 4x4 block mean to float tolerance
        block = data[:4, :4].mean(axis=(0, 1))
        np.testing.assert_allclose(pyr.level2.data[0, 0], block, atol=1e-12)

    def test_rejects_unaligned_level0(self):
        with pytest.raises(ValueError):
            build_pyramid(FeatureMap(np.zeros((6, 8, 2))))
