import numpy as np
import pytest

from orthoflow import (
    HORIZONTAL,
    IDENTITY,
    RANDOM_ORTHONORMAL,
    SCALED_IDENTITY,
    VERTICAL,
    AttentionConfig,
    FeatureMap,
    attend_pyramid,
    attention_backward,
    build_pyramid,
    local_axial_attention,
)
from orthoflow.attention import level_radius
from orthoflow.gradcheck import attention_gradcheck


def _oracle(data, radius, vertical, qk_scale=1.0):
    """Dense score-softmax-aggregate reference."""
    h, w, dim = data.shape
    out = np.zeros_like(data)
    for y in range(h):
        for x in range(w):
            scores, vecs = [], []
            for r in range(-radius, radius + 1):
                yy, xx = (y + r, x) if vertical else (y, x + r)
                if 0 <= yy < h and 0 <= xx < w:
                    scores.append(
                        qk_scale**2 * (data[y, x] @ data[yy, xx]) / np.sqrt(dim)
                    )
                    vecs.append(data[yy, xx])
            s = np.array(scores)
            s -= s.max()
            wgt = np.exp(s)
            wgt /= wgt.sum()
            out[y, x] = sum(wi * vi for wi, vi in zip(wgt, vecs))
    return out


class TestForward:
    def test_radius_zero_is_bit_identical(self):
        rng = np.random.default_rng(0)
        fm = FeatureMap(rng.standard_normal((5, 6, 3)))
        out = local_axial_attention(fm, AttentionConfig(axis=VERTICAL, radius=0))
        np.testing.assert_array_equal(out.data, fm.data)

    def test_constant_map_unchanged(self):
        fm = FeatureMap(np.full((4, 4, 2), 3.0))
        out = local_axial_attention(fm, AttentionConfig(axis=HORIZONTAL, radius=2))
        np.testing.assert_allclose(out.data, 3.0, rtol=1e-6)

    def test_single_row_vertical_is_identity(self):
        rng = np.random.default_rng(1)
        fm = FeatureMap(rng.standard_normal((1, 5, 2)))
        out = local_axial_attention(fm, AttentionConfig(axis=VERTICAL, radius=1))
        np.testing.assert_array_equal(out.data, fm.data)

    def test_single_row_horizontal_matches_three_term_oracle(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((1, 5, 2))
        out = local_axial_attention(
            FeatureMap(data), AttentionConfig(axis=HORIZONTAL, radius=1)
        )
        np.testing.assert_allclose(out.data, _oracle(data, 1, False), atol=1e-10)

    @pytest.mark.parametrize("axis,vertical", [(VERTICAL, True), (HORIZONTAL, False)])
    def test_matches_dense_oracle(self, axis, vertical):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((6, 7, 4))
        out = local_axial_attention(FeatureMap(data), AttentionConfig(axis=axis, radius=3))
        np.testing.assert_allclose(out.data, _oracle(data, 3, vertical), atol=1e-10)

    def test_scaled_identity_matches_oracle(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((5, 5, 3))
        cfg = AttentionConfig(axis=VERTICAL, radius=2, projection=SCALED_IDENTITY, qk_scale=2.5)
        out = local_axial_attention(FeatureMap(data), cfg)
        np.testing.assert_allclose(out.data, _oracle(data, 2, True, 2.5), atol=1e-10)

    def test_transpose_consistency(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((6, 9, 3))
        vert = local_axial_attention(FeatureMap(data), AttentionConfig(axis=VERTICAL, radius=2))
        horiz = local_axial_attention(
            FeatureMap(np.ascontiguousarray(data.transpose(1, 0, 2))),
            AttentionConfig(axis=HORIZONTAL, radius=2),
        )
        np.testing.assert_array_equal(vert.data, horiz.data.transpose(1, 0, 2))

    def test_output_in_convex_hull_of_window(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((7, 7, 3))
        radius = 2
        out = local_axial_attention(
            FeatureMap(data), AttentionConfig(axis=VERTICAL, radius=radius)
        ).data
        h = data.shape[0]
        for y in range(h):
            lo, hi = max(0, y - radius), min(h, y + radius + 1)
            window = data[lo:hi]
            assert np.all(out[y] >= window.min(axis=0) - 1e-9)
            assert np.all(out[y] <= window.max(axis=0) + 1e-9)


class TestProjections:
    def test_orthonormal_matrices(self):
        cfg = AttentionConfig(axis=VERTICAL, projection=RANDOM_ORTHONORMAL, seed=9)
        wq, wk = cfg.qk_matrices(16, np.float64)
        np.testing.assert_allclose(wq.T @ wq, np.eye(16), atol=1e-5)
        np.testing.assert_allclose(wk.T @ wk, np.eye(16), atol=1e-5)
        assert not np.allclose(wq, wk)

    def test_projection_is_seed_deterministic(self):
        cfg = AttentionConfig(axis=VERTICAL, projection=RANDOM_ORTHONORMAL, seed=3)
        a = cfg.qk_matrices(8, np.float64)
        b = cfg.qk_matrices(8, np.float64)
        np.testing.assert_array_equal(a[0], b[0])

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            AttentionConfig(axis="diagonal")
        with pytest.raises(ValueError):
            AttentionConfig(axis=VERTICAL, radius=-1)
        with pytest.raises(ValueError):
            AttentionConfig(axis=VERTICAL, projection="learned")


class TestAttendPyramid:
    def test_level_radius_rule(self):
        assert [level_radius(16, k) for k in range(3)] == [16, 8, 4]
        assert [level_radius(4, k) for k in range(3)] == [4, 2, 2]
        assert [level_radius(0, k) for k in range(3)] == [0, 0, 0]

    def test_constant_pyramid_unchanged(self):
        pyr = build_pyramid(FeatureMap(np.full((8, 8, 2), 1.5)))
        att = attend_pyramid(pyr, radius=4)
        for got, src in zip(att.vertical + att.horizontal, pyr.levels * 2):
            np.testing.assert_allclose(got.data, src.data, rtol=1e-6)

    def test_radius_zero_template_is_identity(self):
        rng = np.random.default_rng(6)
        pyr = build_pyramid(FeatureMap(rng.standard_normal((8, 8, 3))))
        att = attend_pyramid(pyr, radius=0)
        for got, src in zip(att.vertical, pyr.levels):
            np.testing.assert_array_equal(got.data, src.data)
        for got, src in zip(att.horizontal, pyr.levels):
            np.testing.assert_array_equal(got.data, src.data)

    def test_level2_matches_direct_attention(self):
        rng = np.random.default_rng(7)
        pyr = build_pyramid(FeatureMap(rng.standard_normal((8, 8, 3))))
        att = attend_pyramid(pyr, radius=8)
        direct = local_axial_attention(
            pyr.level2, AttentionConfig(axis=VERTICAL, radius=level_radius(8, 2))
        )
        np.testing.assert_array_equal(att.vertical[2].data, direct.data)


class TestBackward:
    def test_zero_upstream_gives_zero_gradient(self):
        rng = np.random.default_rng(8)
        fm = FeatureMap(rng.standard_normal((5, 5, 3)))
        grad = attention_backward(
            fm,
            AttentionConfig(axis=VERTICAL, radius=2),
            FeatureMap(np.zeros((5, 5, 3))),
        )
        np.testing.assert_array_equal(grad.data, 0.0)

    def test_radius_zero_gradient_equals_upstream(self):
        rng = np.random.default_rng(9)
        fm = FeatureMap(rng.standard_normal((4, 4, 2)))
        upstream = FeatureMap(rng.standard_normal((4, 4, 2)))
        grad = attention_backward(fm, AttentionConfig(axis=VERTICAL, radius=0), upstream)
        np.testing.assert_allclose(grad.data, upstream.data, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        fm = FeatureMap(np.zeros((4, 4, 2)))
        with pytest.raises(ValueError):
            attention_backward(
                fm, AttentionConfig(axis=VERTICAL, radius=1), FeatureMap(np.zeros((4, 3, 2)))
            )

    def test_finite_difference_identity_projection(self):
        result = attention_gradcheck(0)
        assert result.max_rel_error < 1e-4

    def test_finite_difference_orthonormal_projection(self):
        result = attention_gradcheck(1, projection=RANDOM_ORTHONORMAL)
        assert result.max_rel_error < 1e-4

    def test_finite_difference_scaled_identity(self):
        result = attention_gradcheck(2, projection=SCALED_IDENTITY)
        assert result.max_rel_error < 1e-4


class TestSoftmaxWeights:
    def test_weights_nonnegative_and_normalized(self):
        from orthoflow._kernels_numpy import _attention_weights

        rng = np.random.default_rng(10)
        for case in range(25):
            data = rng.standard_normal((5, 6, 3))
            radius = int(rng.integers(1, 4))
            weights = _attention_weights(
                data, data, radius, bool(case % 2), 1.0 / np.sqrt(3)
            )
            assert weights.min() >= 0.0
            np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-6)
