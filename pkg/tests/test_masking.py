"""Feature, input, and hybrid masking kernels."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmk.errors import ShapeMismatchError
from hmk.masking import (
    MaskMode,
    MaskedFeatures,
    feature_mask,
    hybrid_mask,
    hybrid_mask_stack,
    input_mask,
)
from hmk.tensor import BinaryMask, FeatureStack, Tensor, broadcast_mask, hadamard, resize_bilinear

from oracles import bilinear_resize_loop, hybrid_loop, input_mask_loop


def _mf(arr, mode, layer=0):
    return MaskedFeatures(Tensor(np.asarray(arr, dtype=np.float32)), mode, layer)


class TestFeatureMask:
    def test_same_size_binary_mask(self):
        feat = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32))
        mask = BinaryMask([[1, 0], [0, 1]])
        out = feature_mask(feat, mask)
        assert out.mode is MaskMode.FM
        assert np.array_equal(out.features.data, [[[1.0, 0.0], [0.0, 4.0]]])

    def test_all_ones_mask_is_identity(self):
        rng = np.random.default_rng(0)
        feat = Tensor(rng.standard_normal((2, 3, 3)).astype(np.float32))
        out = feature_mask(feat, BinaryMask(np.ones((3, 3), dtype=np.uint8)))
        assert np.array_equal(out.features.data, feat.data)

    def test_matches_composed_oracles(self):
        rng = np.random.default_rng(1)
        feat = rng.standard_normal((2, 4, 4)).astype(np.float32)
        mask = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        out = feature_mask(Tensor(feat), BinaryMask(mask))
        maskf = bilinear_resize_loop(mask.astype(np.float64), 4, 4).astype(np.float32)
        expect = feat * np.stack([maskf, maskf])
        np.testing.assert_allclose(out.features.data, expect, atol=1e-6)

    def test_equals_operator_composition_exactly(self):
        rng = np.random.default_rng(2)
        feat = Tensor(rng.standard_normal((5, 6, 7)).astype(np.float32))
        mask = BinaryMask((rng.random((9, 11)) < 0.5).astype(np.uint8))
        fused = feature_mask(feat, mask).features
        composed = hadamard(feat, broadcast_mask(resize_bilinear(mask, 6, 7), 5))
        assert np.array_equal(fused.data, composed.data)

    def test_support_preservation(self):
        rng = np.random.default_rng(3)
        feat = Tensor(rng.standard_normal((3, 5, 5)).astype(np.float32))
        mask = BinaryMask((rng.random((10, 10)) < 0.3).astype(np.uint8))
        out = feature_mask(feat, mask)
        maskf = resize_bilinear(mask, 5, 5).data
        zero_sites = maskf == 0.0
        assert np.all(out.features.data[:, zero_sites] == 0.0)

    def test_rank_precondition(self):
        with pytest.raises(ValueError, match="rank-3"):
            feature_mask(Tensor([[1.0]]), BinaryMask([[1]]))


class TestInputMask:
    def test_all_ones_identity(self):
        rng = np.random.default_rng(4)
        img = Tensor(rng.random((3, 4, 4)).astype(np.float32))
        out = input_mask(img, BinaryMask(np.ones((4, 4), dtype=np.uint8)))
        assert np.array_equal(out.data, img.data)

    def test_all_zeros_blanks_image(self):
        rng = np.random.default_rng(5)
        img = Tensor(rng.random((3, 4, 4)).astype(np.float32))
        out = input_mask(img, BinaryMask(np.zeros((4, 4), dtype=np.uint8)))
        assert not out.data.any()

    def test_same_size_matches_select_oracle(self):
        rng = np.random.default_rng(6)
        img = rng.random((3, 5, 6)).astype(np.float32)
        mask = (rng.random((5, 6)) < 0.5).astype(np.uint8)
        out = input_mask(Tensor(img), BinaryMask(mask))
        assert np.array_equal(out.data, input_mask_loop(img, mask))

    def test_requires_three_channels(self):
        with pytest.raises(ValueError, match="3, h, w"):
            input_mask(Tensor(np.zeros((2, 4, 4), dtype=np.float32)), BinaryMask([[1]]))


class TestHybridMask:
    def test_hand_worked_example(self):
        fm = _mf([[[0.0, 2.0], [3.0, 0.0]]], MaskMode.FM)
        im = _mf([[[5.0, 6.0], [7.0, 8.0]]], MaskMode.IM)
        out = hybrid_mask(fm, im)
        assert out.mode is MaskMode.HM
        assert np.array_equal(out.features.data, [[[5.0, 2.0], [3.0, 8.0]]])

    def test_no_zeros_keeps_fm(self):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal((2, 3, 3)).astype(np.float32)
        vals[vals == 0.0] = 1.0
        fm = MaskedFeatures(Tensor(vals), MaskMode.FM)
        im = _mf(rng.standard_normal((2, 3, 3)), MaskMode.IM)
        assert np.array_equal(hybrid_mask(fm, im).features.data, vals)

    def test_all_zeros_takes_im(self):
        fm = _mf(np.zeros((2, 2, 2)), MaskMode.FM)
        im = _mf(np.arange(8, dtype=np.float32).reshape(2, 2, 2) + 1, MaskMode.IM)
        assert np.array_equal(hybrid_mask(fm, im).features.data, im.features.data)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        fm_vals = rng.standard_normal((4, 6, 6)).astype(np.float32)
        fm_vals[rng.random((4, 6, 6)) < 0.4] = 0.0
        im_vals = rng.standard_normal((4, 6, 6)).astype(np.float32)
        out = hybrid_mask(_mf(fm_vals, MaskMode.FM), _mf(im_vals, MaskMode.IM))
        assert np.array_equal(out.features.data, hybrid_loop(fm_vals, im_vals))

    def test_zero_tol_widens_replacement(self):
        fm_vals = np.array([[[0.05, 0.5], [-0.05, -0.5]]], dtype=np.float32)
        im_vals = np.full((1, 2, 2), 9.0, dtype=np.float32)
        out = hybrid_mask(_mf(fm_vals, MaskMode.FM), _mf(im_vals, MaskMode.IM), zero_tol=0.1)
        assert np.array_equal(out.features.data, [[[9.0, 0.5], [9.0, -0.5]]])
        assert np.array_equal(
            out.features.data, hybrid_loop(fm_vals, im_vals, tol=0.1)
        )

    def test_mode_tags_enforced(self):
        a = _mf(np.ones((1, 2, 2)), MaskMode.FM)
        b = _mf(np.ones((1, 2, 2)), MaskMode.FM)
        with pytest.raises(ValueError, match="mode IM"):
            hybrid_mask(a, b)
        with pytest.raises(ValueError, match="mode FM"):
            hybrid_mask(_mf(np.ones((1, 2, 2)), MaskMode.IM), _mf(np.ones((1, 2, 2)), MaskMode.IM))

    def test_shape_and_layer_mismatch(self):
        fm = _mf(np.ones((1, 2, 2)), MaskMode.FM)
        with pytest.raises(ShapeMismatchError):
            hybrid_mask(fm, _mf(np.ones((1, 2, 3)), MaskMode.IM))
        with pytest.raises(ValueError, match="source layers"):
            hybrid_mask(fm, _mf(np.ones((1, 2, 2)), MaskMode.IM, layer=1))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_selection_completeness_and_fm_dominance(self, seed):
        rng = np.random.default_rng(seed)
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        fm_vals = rng.standard_normal(shape).astype(np.float32)
        fm_vals[rng.random(shape) < 0.5] = 0.0
        im_vals = rng.standard_normal(shape).astype(np.float32)
        out = hybrid_mask(_mf(fm_vals, MaskMode.FM), _mf(im_vals, MaskMode.IM)).features.data
        assert np.all((out == fm_vals) | (out == im_vals))
        kept = np.abs(fm_vals) > 0
        assert np.array_equal(out[kept], fm_vals[kept])

    def test_idempotent_refill(self):
        rng = np.random.default_rng(9)
        fm_vals = rng.standard_normal((3, 4, 4)).astype(np.float32)
        fm_vals[rng.random((3, 4, 4)) < 0.5] = 0.0
        im_vals = rng.standard_normal((3, 4, 4)).astype(np.float32)
        im = _mf(im_vals, MaskMode.IM)
        first = hybrid_mask(_mf(fm_vals, MaskMode.FM), im)
        again = hybrid_mask(MaskedFeatures(first.features, MaskMode.FM), im)
        assert np.array_equal(first.features.data, again.features.data)


class TestHybridMaskStack:
    def _stacks(self, rng, layers=3):
        fm_layers, im_layers = [], []
        for i in range(layers):
            shape = (2, 4 - i, 4 - i)
            f = rng.standard_normal(shape).astype(np.float32)
            f[rng.random(shape) < 0.4] = 0.0
            fm_layers.append((i, Tensor(f)))
            im_layers.append((i, Tensor(rng.standard_normal(shape).astype(np.float32))))
        return FeatureStack(fm_layers), FeatureStack(im_layers)

    def test_two_layer_composition(self):
        fm0 = np.array([[[0.0, 2.0], [3.0, 0.0]]], dtype=np.float32)
        im0 = np.array([[[5.0, 6.0], [7.0, 8.0]]], dtype=np.float32)
        fm1 = np.zeros((1, 1, 1), dtype=np.float32)
        im1 = np.full((1, 1, 1), 4.0, dtype=np.float32)
        out = hybrid_mask_stack(
            FeatureStack([(0, Tensor(fm0)), (1, Tensor(fm1))]),
            FeatureStack([(0, Tensor(im0)), (1, Tensor(im1))]),
        )
        assert np.array_equal(out[0][1].data, [[[5.0, 2.0], [3.0, 8.0]]])
        assert np.array_equal(out[1][1].data, [[[4.0]]])

    def test_empty_stacks(self):
        out = hybrid_mask_stack(FeatureStack([]), FeatureStack([]))
        assert len(out) == 0

    def test_matches_per_layer_oracle(self):
        rng = np.random.default_rng(10)
        fms, ims = self._stacks(rng)
        out = hybrid_mask_stack(fms, ims)
        assert out.layer_ids == (0, 1, 2)
        for (i, got), (_, f), (_, g) in zip(out, fms, ims):
            assert np.array_equal(got.data, hybrid_loop(f.data, g.data))

    def test_layer_mismatch_rejected(self):
        t = Tensor(np.ones((1, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="layer ids"):
            hybrid_mask_stack(FeatureStack([(0, t)]), FeatureStack([(1, t)]))
