"""Tensor/BinaryMask types and the shared kernels."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmk.errors import ShapeMismatchError
from hmk.tensor import BinaryMask, FeatureStack, Tensor, broadcast_mask, hadamard, resize_bilinear

from oracles import bilinear_resize_loop, broadcast_loop, hadamard_loop


class TestTensor:
    def test_holds_float32_row_major(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.data.dtype == np.float32
        assert t.data.flags.c_contiguous
        assert t.shape == (2, 2)

    def test_rejects_rank_0_and_5(self):
        with pytest.raises(ValueError, match="rank"):
            Tensor(np.float32(3.0))
        with pytest.raises(ValueError, match="rank"):
            Tensor(np.zeros((1, 1, 1, 1, 1), dtype=np.float32))

    def test_rejects_zero_extent(self):
        with pytest.raises(ValueError, match="extents"):
            Tensor(np.zeros((2, 0), dtype=np.float32))

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError, match="finite"):
            Tensor(np.array([1.0, np.nan], dtype=np.float32))
        with pytest.raises(ValueError, match="finite"):
            Tensor(np.array([np.inf, 1.0], dtype=np.float32))

    def test_immutable_and_detached(self):
        src = np.ones((2, 2), dtype=np.float32)
        t = Tensor(src)
        src[0, 0] = 5.0
        assert t.data[0, 0] == 1.0
        with pytest.raises(ValueError):
            t.data[0, 0] = 7.0


class TestBinaryMask:
    def test_accepts_01(self):
        m = BinaryMask([[0, 1], [1, 0]])
        assert m.height == 2 and m.width == 2
        assert m.foreground_pixels() == 2

    def test_rejects_other_values(self):
        with pytest.raises(ValueError, match="0 or 1"):
            BinaryMask([[0, 2], [1, 0]])

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError, match="2D"):
            BinaryMask([0, 1])


class TestFeatureStack:
    def test_requires_increasing_ids(self):
        t = Tensor(np.zeros((1, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="increasing"):
            FeatureStack([(1, t), (1, t)])

    def test_requires_rank3(self):
        with pytest.raises(ValueError, match="rank-3"):
            FeatureStack([(0, Tensor(np.zeros((2, 2), dtype=np.float32)))])

    def test_empty_allowed(self):
        assert len(FeatureStack([])) == 0


class TestHadamard:
    def test_binary_mask_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(hadamard(a, b).data, [[1.0, 0.0], [0.0, 4.0]])

    def test_ones_identity(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.standard_normal((3, 4)).astype(np.float32))
        ones = Tensor(np.ones((3, 4), dtype=np.float32))
        assert np.array_equal(hadamard(a, ones).data, a.data)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 5, 7)).astype(np.float32)
        b = rng.standard_normal((3, 5, 7)).astype(np.float32)
        out = hadamard(Tensor(a), Tensor(b))
        assert np.array_equal(out.data, hadamard_loop(a, b))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError, match=r"\(2, 2\).*\(2, 3\)"):
            hadamard(Tensor(np.zeros((2, 2), dtype=np.float32)), Tensor(np.zeros((2, 3), dtype=np.float32)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_commutes(self, seed):
        rng = np.random.default_rng(seed)
        shape = tuple(rng.integers(1, 5, size=int(rng.integers(1, 5))))
        a = rng.standard_normal(shape).astype(np.float32)
        b = rng.standard_normal(shape).astype(np.float32)
        assert np.array_equal(hadamard(Tensor(a), Tensor(b)).data, hadamard(Tensor(b), Tensor(a)).data)


class TestResizeBilinear:
    def test_identity_size_exact(self):
        rng = np.random.default_rng(3)
        mask = BinaryMask((rng.random((4, 4)) < 0.5).astype(np.uint8))
        out = resize_bilinear(mask, 4, 4)
        assert np.array_equal(out.data, mask.data.astype(np.float32))

    def test_constant_preserved_any_size(self):
        ones = BinaryMask(np.ones((3, 5), dtype=np.uint8))
        for oh, ow in [(1, 1), (2, 9), (7, 3), (12, 12)]:
            assert np.array_equal(resize_bilinear(ones, oh, ow).data, np.ones((oh, ow), dtype=np.float32))

    def test_checker_upsample_matches_formula_oracle(self):
        mask = BinaryMask([[0, 1], [1, 0]])
        out = resize_bilinear(mask, 4, 4)
        expect = bilinear_resize_loop(mask.data.astype(np.float64), 4, 4)
        np.testing.assert_allclose(out.data, expect, atol=1e-6)

    def test_random_resizes_match_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            ih, iw = rng.integers(1, 9, size=2)
            oh, ow = rng.integers(1, 13, size=2)
            mask = BinaryMask((rng.random((ih, iw)) < 0.5).astype(np.uint8))
            out = resize_bilinear(mask, int(oh), int(ow))
            expect = bilinear_resize_loop(mask.data.astype(np.float64), int(oh), int(ow))
            np.testing.assert_allclose(out.data, expect, atol=1e-6)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            mask = BinaryMask((rng.random((6, 6)) < 0.5).astype(np.uint8))
            out = resize_bilinear(mask, 11, 3).data
            assert out.min() >= mask.data.min()
            assert out.max() <= mask.data.max()

    def test_zero_output_extent_rejected(self):
        mask = BinaryMask([[1]])
        with pytest.raises(ValueError, match=">= 1"):
            resize_bilinear(mask, 0, 4)


class TestBroadcastMask:
    def test_replicates_three_channels(self):
        maskf = Tensor([[0.5, 1.0], [0.0, 0.25]])
        out = broadcast_mask(maskf, 3)
        assert out.shape == (3, 2, 2)
        for c in range(3):
            assert np.array_equal(out.data[c], maskf.data)

    def test_single_channel(self):
        maskf = Tensor([[1.0, 0.0]])
        out = broadcast_mask(maskf, 1)
        assert out.shape == (1, 1, 2)
        assert np.array_equal(out.data[0], maskf.data)

    def test_matches_copy_oracle(self):
        rng = np.random.default_rng(6)
        maskf = rng.random((3, 4)).astype(np.float32)
        out = broadcast_mask(Tensor(maskf), 4)
        assert np.array_equal(out.data, broadcast_loop(maskf, 4))

    def test_zero_channels_rejected(self):
        with pytest.raises(ValueError, match="channel count"):
            broadcast_mask(Tensor([[1.0]]), 0)

    def test_rank_precondition(self):
        with pytest.raises(ValueError, match="rank-2"):
            broadcast_mask(Tensor(np.zeros((1, 2, 2), dtype=np.float32)), 2)
