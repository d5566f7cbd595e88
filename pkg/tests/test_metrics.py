"""Metrics: PSNR, CIEDE2000 against published verification pairs, the
feature-swap experiment, and report formatting."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from camcolor.errors import ContractViolation
from camcolor.metrics import (MetricReport, ablation_to_csv, ablation_to_table,
                              AblationRow, ciede2000, cycle_predict,
                              delta_e_2000, evaluate_pairs, feature_swap,
                              psnr, reports_to_csv, reports_to_table,
                              srgb_to_lab)
from camcolor.network import ArchConfig, init_translator_pair
from camcolor.pipesim import PairedSample, random_canonical_image

from reference_data import CIEDE2000_CASES


class TestPsnr:
    def test_identical_images_are_infinite(self):
        img = np.random.default_rng(0).random((4, 4, 3))
        assert psnr(img, img.copy()) == math.inf

    def test_mse_001_is_20db(self):
        a = np.zeros((10, 10, 3))
        b = np.full((10, 10, 3), 0.1)
        npt.assert_allclose(psnr(a, b), 20.0, rtol=1e-12)

    def test_mse_1_is_0db(self):
        a = np.zeros((5, 5, 3))
        b = np.ones((5, 5, 3))
        npt.assert_allclose(psnr(a, b), 0.0, atol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_invariant_under_shared_pixel_permutation(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((4, 4, 3)), rng.random((4, 4, 3))
        perm = rng.permutation(16)
        ap = a.reshape(16, 3)[perm].reshape(4, 4, 3)
        bp = b.reshape(16, 3)[perm].reshape(4, 4, 3)
        npt.assert_allclose(psnr(a, b), psnr(ap, bp), rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            psnr(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


class TestCiede2000:
    def test_zero_for_equal_colors(self):
        lab = np.array([37.0, 12.0, -40.0])
        assert float(ciede2000(lab, lab)) == 0.0

    def test_published_verification_pairs(self):
        for l1, a1, b1, l2, a2, b2, expect in CIEDE2000_CASES:
            got = float(ciede2000(np.array([l1, a1, b1]),
                                  np.array([l2, a2, b2])))
            assert abs(got - expect) <= 1e-4, (l1, a1, b1, l2, a2, b2)

    def test_achromatic_pair_no_nan(self):
        lab = np.array([50.0, 0.0, 0.0])
        val = float(ciede2000(lab, lab.copy()))
        assert val == 0.0 and not math.isnan(val)

    def test_symmetry_with_unit_parametric_factors(self):
        rng = np.random.default_rng(3)
        lab1 = rng.uniform([0, -60, -60], [100, 60, 60], size=(50, 3))
        lab2 = rng.uniform([0, -60, -60], [100, 60, 60], size=(50, 3))
        npt.assert_allclose(ciede2000(lab1, lab2), ciede2000(lab2, lab1),
                            rtol=1e-12)

    def test_image_level_mean_and_errors(self):
        rng = np.random.default_rng(4)
        a = rng.random((5, 5, 3))
        assert delta_e_2000(a, a.copy()) == 0.0
        b = rng.random((5, 5, 3))
        assert delta_e_2000(a, b) == delta_e_2000(b, a)
        with pytest.raises(ContractViolation):
            delta_e_2000(a, np.zeros((4, 5, 3)))


class TestSrgbToLab:
    def test_white_and_black(self):
        lab_w = srgb_to_lab(np.array([[1.0, 1.0, 1.0]]))[0]
        npt.assert_allclose(lab_w, [100.0, 0.0, 0.0], atol=2e-2)
        lab_k = srgb_to_lab(np.array([[0.0, 0.0, 0.0]]))[0]
        npt.assert_allclose(lab_k, [0.0, 0.0, 0.0], atol=1e-8)

    def test_midgray_is_neutral(self):
        lab = srgb_to_lab(np.array([[0.5, 0.5, 0.5]]))[0]
        assert abs(lab[1]) < 1e-4 and abs(lab[2]) < 1e-4


def tiny_trained_pairless_model(seed=0):
    """Random-weight model big enough to run, small enough to stay instant."""
    return init_translator_pair(ArchConfig(width=8, d_share=6), seed=seed)


class TestFeatureSwap:
    def test_self_swap_equals_cycle_prediction_exactly(self):
        pair = tiny_trained_pairless_model()
        photo = random_canonical_image(0, 16, 16)
        pred_a, pred_b = feature_swap(photo, photo.copy(), pair)
        cyc = cycle_predict(photo, pair)
        npt.assert_array_equal(pred_a, cyc)
        npt.assert_array_equal(pred_b, cyc)

    def test_deterministic(self):
        pair = tiny_trained_pairless_model(1)
        a = random_canonical_image(1, 16, 16)
        b = random_canonical_image(2, 16, 16)
        s1 = feature_swap(a, b, pair)
        s2 = feature_swap(a, b, pair)
        assert np.array_equal(s1[0], s2[0]) and np.array_equal(s1[1], s2[1])

    def test_shape_mismatch_rejected(self):
        pair = tiny_trained_pairless_model(2)
        with pytest.raises(ContractViolation):
            feature_swap(np.zeros((16, 16, 3)), np.zeros((16, 8, 3)), pair)

    def test_needs_sharing(self):
        pair = init_translator_pair(
            ArchConfig(width=8, use_sharing=False), seed=3)
        img = random_canonical_image(3, 16, 16)
        with pytest.raises(ContractViolation):
            feature_swap(img, img, pair)


class TestReports:
    def test_evaluate_pairs_has_three_directions(self):
        pair = tiny_trained_pairless_model(4)
        raw = random_canonical_image(4, 16, 16)
        samples = [PairedSample(raw=raw, jpeg=np.clip(raw * 0.9, 0, 1),
                                spec_id=0, scene_id=0)]
        reports = evaluate_pairs(pair, samples)
        assert [r.direction for r in reports] == \
            ["RAW->JPEG", "JPEG->RAW", "Cycle(JPEG)"]
        csv = reports_to_csv(reports)
        assert csv.count("\n") == 4 and csv.startswith("direction,")
        table = reports_to_table(reports)
        assert "PSNR(dB)" in table

    def test_ablation_table_marks_best(self):
        rows = [AblationRow("a", 10.0, 20.0, 30.0),
                AblationRow("b", 12.0, 18.0, 31.0)]
        table = ablation_to_table(rows)
        lines = table.splitlines()
        assert len(lines) == 3
        assert "12.00*" in lines[2] and "31.00*" in lines[2]
        assert "20.00*" in lines[1]
        csv = ablation_to_csv(rows)
        assert csv.splitlines()[0] == \
            "configuration,raw2jpeg_psnr,jpeg2raw_psnr,cycle_psnr"
