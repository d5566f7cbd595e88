"""Color calibration: fitting, applying, file formats, and the fit's
algebraic properties."""

import numpy as np
import numpy.testing as npt
import pytest

from camcolor.calibrate import (ColorMatrix, PatchSet, apply_color_matrix,
                                fit_color_matrix, read_matrix_file,
                                read_patch_file, write_matrix_file)
from camcolor.errors import ContractViolation, IllPosedFit


def random_patches(n, seed, noise=0.0):
    """Patches synthesized from a known ground-truth transform."""
    rng = np.random.default_rng(seed)
    t_star = rng.uniform(-1.0, 1.5, size=(3, 4))
    raw = rng.uniform(0.0, 1.0, size=(n, 3))
    black = rng.uniform(0.0, 0.05, size=3)
    design = np.hstack([raw - black, np.ones((n, 1))])
    ref = design @ t_star.T
    if noise:
        ref = ref + rng.normal(0.0, noise, size=ref.shape)
    return PatchSet(raw_colors=raw, reference_colors=ref,
                    black_level=black), t_star


class TestFit:
    def test_identity_patches_give_identity_matrix(self):
        rng = np.random.default_rng(0)
        colors = rng.random((24, 3))
        matrix, rms = fit_color_matrix(PatchSet(colors, colors))
        npt.assert_allclose(matrix.T, np.hstack([np.eye(3), np.zeros((3, 1))]),
                            atol=1e-9)
        assert rms <= 1e-9

    def test_recovers_known_transform_noiseless(self):
        patches, t_star = random_patches(24, seed=1)
        matrix, rms = fit_color_matrix(patches)
        npt.assert_allclose(matrix.T, t_star, atol=1e-6)
        assert rms < 1e-8

    def test_noisy_fit_residual_stays_small(self):
        patches, _ = random_patches(24, seed=2, noise=0.01)
        _, rms = fit_color_matrix(patches)
        assert rms <= 0.02

    def test_three_patches_rejected(self):
        patches, _ = random_patches(3, seed=3)
        with pytest.raises(IllPosedFit):
            fit_color_matrix(patches)

    def test_degenerate_colors_rejected_with_reason(self):
        raw = np.tile([[0.2, 0.4, 0.6]], (10, 1))
        with pytest.raises(IllPosedFit, match="rank"):
            fit_color_matrix(PatchSet(raw, raw))

    def test_reference_scaling_equivariance(self):
        patches, _ = random_patches(24, seed=4)
        m1, _ = fit_color_matrix(patches)
        scaled = PatchSet(patches.raw_colors, 3.0 * patches.reference_colors,
                          patches.black_level)
        m2, _ = fit_color_matrix(scaled)
        npt.assert_allclose(m2.T, 3.0 * m1.T, rtol=1e-9)

    def test_duplicate_patches_do_not_move_solution(self):
        patches, _ = random_patches(24, seed=5)
        m1, _ = fit_color_matrix(patches)
        dup = PatchSet(np.vstack([patches.raw_colors, patches.raw_colors[:5]]),
                       np.vstack([patches.reference_colors,
                                  patches.reference_colors[:5]]),
                       patches.black_level)
        m2, _ = fit_color_matrix(dup)
        npt.assert_allclose(m2.T, m1.T, atol=1e-9)


class TestApply:
    def test_identity_leaves_image_unchanged(self):
        img = np.random.default_rng(6).random((4, 5, 3)).astype(np.float32)
        ident = ColorMatrix(np.hstack([np.eye(3), np.zeros((3, 1))]))
        npt.assert_allclose(apply_color_matrix(img, ident), img, rtol=1e-6)

    def test_doubling_matrix(self):
        ident2 = ColorMatrix(np.hstack([2.0 * np.eye(3), np.zeros((3, 1))]))
        img = np.array([[[0.1, 0.2, 0.3]]])
        npt.assert_allclose(apply_color_matrix(img, ident2),
                            [[[0.2, 0.4, 0.6]]], rtol=1e-6)

    def test_clamps_below_zero_only(self):
        m = ColorMatrix(np.hstack([np.eye(3), np.full((3, 1), -0.5)]))
        img = np.array([[[0.1, 0.1, 2.0]]])
        out = apply_color_matrix(img, m)
        npt.assert_allclose(out, [[[0.0, 0.0, 1.5]]], rtol=1e-6)

    def test_fit_apply_round_trip_hits_reference_colors(self):
        patches, _ = random_patches(24, seed=7)
        matrix, rms = fit_color_matrix(patches)
        img = patches.raw_colors.reshape(4, 6, 3)
        out = apply_color_matrix(img, matrix, patches.black_level)
        ref = np.maximum(patches.reference_colors.reshape(4, 6, 3), 0.0)
        assert np.sqrt(np.mean((out - ref) ** 2)) <= rms + 1e-7

    def test_black_level_subtracted_before_transform(self):
        ident = ColorMatrix(np.hstack([np.eye(3), np.zeros((3, 1))]))
        img = np.full((1, 1, 3), 0.5)
        out = apply_color_matrix(img, ident, black_level=(0.1, 0.2, 0.3))
        npt.assert_allclose(out, [[[0.4, 0.3, 0.2]]], rtol=1e-6)


class TestFiles:
    def test_patch_file_parsing(self, tmp_path):
        path = tmp_path / "patches.txt"
        path.write_text("# chart measurements\n"
                        "0.1 0.2 0.3  0.15 0.25 0.35\n"
                        "0.4 0.5 0.6  0.45 0.55 0.65  # second patch\n")
        patches = read_patch_file(path)
        assert patches.raw_colors.shape == (2, 3)
        npt.assert_allclose(patches.reference_colors[1], [0.45, 0.55, 0.65])

    def test_patch_file_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0.1 0.2 0.3\n")
        with pytest.raises(ContractViolation):
            read_patch_file(path)

    def test_matrix_file_round_trip_exact(self, tmp_path):
        patches, _ = random_patches(24, seed=8)
        matrix, rms = fit_color_matrix(patches)
        path = tmp_path / "matrix.txt"
        write_matrix_file(path, matrix, rms)
        loaded, rms2 = read_matrix_file(path)
        npt.assert_array_equal(loaded.T, matrix.T)
        assert rms2 == rms
