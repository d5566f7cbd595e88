"""Compositing: blend arithmetic, background preservation, and the full
object insertion chain."""

import numpy as np
import numpy.testing as npt
import pytest

from camcolor.compositing import (CompositeResult, RenderedObject, blend_raw,
                                  composite_object)
from camcolor.errors import ContractViolation
from camcolor.network import ArchConfig, init_translator_pair
from camcolor.pipesim import random_canonical_image


def make_object(size=16, seed=0, mask=None):
    rgb = random_canonical_image(seed, size, size)
    if mask is None:
        mask = np.zeros((size, size), dtype=np.float32)
    return RenderedObject(rgb=rgb, mask=mask)


def tiny_pair(seed=0):
    return init_translator_pair(ArchConfig(width=8, d_share=6), seed=seed)


class TestBlendRaw:
    def test_zero_mask_returns_background_exactly(self):
        obj = make_object(seed=1)
        bg = random_canonical_image(2, 16, 16)
        npt.assert_array_equal(blend_raw(obj, bg), bg)

    def test_full_mask_returns_object_exactly(self):
        obj = make_object(seed=3, mask=np.ones((16, 16), dtype=np.float32))
        bg = random_canonical_image(4, 16, 16)
        npt.assert_array_equal(blend_raw(obj, bg), obj.rgb)

    def test_half_mask_midpoint(self):
        rgb = np.ones((4, 4, 3), dtype=np.float32)
        obj = RenderedObject(rgb=rgb, mask=np.full((4, 4), 0.5, dtype=np.float32))
        out = blend_raw(obj, np.zeros((4, 4, 3), dtype=np.float32))
        npt.assert_allclose(out, 0.5)

    def test_affine_in_object_and_background(self):
        mask = np.random.default_rng(5).random((8, 8)).astype(np.float32)
        r1 = random_canonical_image(6, 8, 8)
        r2 = random_canonical_image(7, 8, 8)
        bg = random_canonical_image(8, 8, 8)
        a = 0.3
        mixed = blend_raw(RenderedObject(a * r1 + (1 - a) * r2, mask), bg)
        split = (a * blend_raw(RenderedObject(r1, mask), bg)
                 + (1 - a) * blend_raw(RenderedObject(r2, mask), bg))
        npt.assert_allclose(mixed, split, atol=1e-6)

    def test_dimension_mismatch_rejected(self):
        obj = make_object(seed=9)
        with pytest.raises(ContractViolation):
            blend_raw(obj, np.zeros((8, 8, 3), dtype=np.float32))


class TestRenderedObjectValidation:
    def test_mask_out_of_range_rejected(self):
        rgb = np.zeros((4, 4, 3), dtype=np.float32)
        with pytest.raises(ContractViolation):
            RenderedObject(rgb=rgb, mask=np.full((4, 4), 1.5))

    def test_mask_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            RenderedObject(rgb=np.zeros((4, 4, 3)), mask=np.zeros((5, 4)))

    def test_negative_rgb_rejected(self):
        with pytest.raises(ContractViolation):
            RenderedObject(rgb=np.full((4, 4, 3), -0.1), mask=np.zeros((4, 4)))

    def test_fractional_mask_accepted(self):
        obj = RenderedObject(rgb=np.zeros((4, 4, 3)),
                             mask=np.full((4, 4), 0.25))
        assert obj.mask.dtype == np.float32


class TestCompositeObject:
    def test_zero_mask_keeps_photo_bit_identical(self):
        photo = np.clip(random_canonical_image(10, 16, 16) * 0.9, 0, 1)
        result = composite_object(photo, make_object(seed=11), tiny_pair())
        npt.assert_array_equal(result.final, photo)

    def test_background_pixels_untouched_with_partial_mask(self):
        photo = np.clip(random_canonical_image(12, 16, 16) * 0.9, 0, 1)
        mask = np.zeros((16, 16), dtype=np.float32)
        mask[4:9, 5:10] = 1.0
        mask[9, 5:10] = 0.5  # soft edge row
        result = composite_object(photo, make_object(seed=13, mask=mask),
                                  tiny_pair(1))
        outside = mask == 0.0
        npt.assert_array_equal(result.final[outside], photo[outside])
        assert not np.array_equal(result.final[~outside], photo[~outside])

    def test_full_mask_patch_blends_object_into_raw(self):
        photo = np.clip(random_canonical_image(14, 16, 16) * 0.9, 0, 1)
        mask = np.zeros((16, 16), dtype=np.float32)
        mask[2:7, 2:7] = 1.0
        obj = make_object(seed=15, mask=mask)
        result = composite_object(photo, obj, tiny_pair(2))
        npt.assert_array_equal(result.blended_raw[2:7, 2:7], obj.rgb[2:7, 2:7])
        npt.assert_array_equal(result.blended_raw[mask == 0],
                               result.raw_pred[mask == 0])

    def test_all_intermediates_share_dimensions(self):
        photo = np.clip(random_canonical_image(16, 16, 16) * 0.9, 0, 1)
        result = composite_object(photo, make_object(seed=17), tiny_pair(3))
        for img in (result.raw_pred, result.blended_raw, result.jpeg_pred,
                    result.final):
            assert img.shape == photo.shape

    def test_final_equals_mask_blend_of_jpeg_pred(self):
        photo = np.clip(random_canonical_image(18, 16, 16) * 0.9, 0, 1)
        mask = np.random.default_rng(19).random((16, 16)).astype(np.float32)
        result = composite_object(photo, make_object(seed=20, mask=mask),
                                  tiny_pair(4))
        expect = mask[:, :, None] * result.jpeg_pred \
            + (1.0 - mask[:, :, None]) * photo
        npt.assert_array_equal(result.final, expect)

    def test_deterministic(self):
        photo = np.clip(random_canonical_image(21, 16, 16) * 0.9, 0, 1)
        mask = np.random.default_rng(22).random((16, 16)).astype(np.float32)
        obj = make_object(seed=23, mask=mask)
        pair = tiny_pair(5)
        r1 = composite_object(photo, obj, pair)
        r2 = composite_object(photo, obj, pair)
        npt.assert_array_equal(r1.final, r2.final)

    def test_size_mismatch_rejected(self):
        photo = np.zeros((16, 16, 3), dtype=np.float32)
        with pytest.raises(ContractViolation):
            composite_object(photo, make_object(size=8), tiny_pair(6))

    def test_outputs_clamped_to_unit_interval(self):
        photo = np.clip(random_canonical_image(24, 16, 16), 0, 1)
        mask = np.full((16, 16), 0.7, dtype=np.float32)
        result = composite_object(photo, make_object(seed=25, mask=mask),
                                  tiny_pair(7))
        for img in (result.raw_pred, result.jpeg_pred, result.final):
            assert img.min() >= 0.0 and img.max() <= 1.0
