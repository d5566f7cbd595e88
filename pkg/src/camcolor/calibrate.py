"""Least-squares color calibration into the canonical linear space.

A 3x4 affine matrix maps black-level-corrected camera colors to reference
linear sRGB values, fitted on chart-patch correspondences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, IllPosedFit


@dataclass
class PatchSet:
    """Measured chart patches: camera colors, reference colors, black level."""
    raw_colors: np.ndarray        # [N,3]
    reference_colors: np.ndarray  # [N,3]
    black_level: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.raw_colors = np.asarray(self.raw_colors, dtype=np.float64)
        self.reference_colors = np.asarray(self.reference_colors, dtype=np.float64)
        self.black_level = np.asarray(self.black_level, dtype=np.float64).reshape(3)
        if self.raw_colors.shape != self.reference_colors.shape or \
                self.raw_colors.ndim != 2 or self.raw_colors.shape[1] != 3:
            raise ContractViolation(
                f"patch arrays must both be N,3: {self.raw_colors.shape} vs "
                f"{self.reference_colors.shape}")


@dataclass
class ColorMatrix:
    """Affine camera-to-canonical transform: out = T @ [rgb - black; 1]."""
    T: np.ndarray  # [3,4]

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.float64)
        if self.T.shape != (3, 4):
            raise ContractViolation(f"color matrix must be 3x4, got {self.T.shape}")


def _design_matrix(patches: PatchSet) -> np.ndarray:
    corrected = patches.raw_colors - patches.black_level
    return np.hstack([corrected, np.ones((corrected.shape[0], 1))])


def fit_color_matrix(patches: PatchSet) -> tuple[ColorMatrix, float]:
    """Fit T minimizing sum ||T @ [raw - black; 1] - reference||^2.

    Solved per output channel (three independent 4-dim least squares).
    Returns the matrix and the RMS residual over all patch components.

    Raises IllPosedFit when the design matrix has rank < 4 (fewer than four
    patches, or degenerate patch colors).
    """
    a = _design_matrix(patches)
    n = a.shape[0]
    if n < 4:
        raise IllPosedFit(f"need at least 4 patches for a 3x4 fit, got {n}")
    rank = np.linalg.matrix_rank(a)
    if rank < 4:
        raise IllPosedFit(
            f"design matrix rank {rank} < 4: patch colors do not span an "
            "affine basis (collinear or duplicated patches)")
    t_rows = []
    for ch in range(3):
        coef, *_ = np.linalg.lstsq(a, patches.reference_colors[:, ch], rcond=None)
        t_rows.append(coef)
    matrix = ColorMatrix(np.vstack(t_rows))
    resid = a @ matrix.T.T - patches.reference_colors
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return matrix, rms


def apply_color_matrix(image: np.ndarray, matrix: ColorMatrix,
                       black_level=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Map an H,W,3 camera image into the canonical linear space.

    Output is clamped at 0 below but not above: linear canonical values may
    legitimately exceed 1.
    """
    img = np.asarray(image, dtype=np.float64)
    black = np.asarray(black_level, dtype=np.float64).reshape(3)
    corrected = img - black
    out = corrected @ matrix.T[:, :3].T + matrix.T[:, 3]
    return np.maximum(out, 0.0).astype(np.float32)


def read_patch_file(path) -> PatchSet:
    """Parse the plain-text patch table: one row per patch, six numbers
    (camera R,G,B then reference R,G,B), '#' starts a comment."""
    try:
        table = np.loadtxt(Path(path), comments="#", ndmin=2)
    except ValueError as exc:
        raise ContractViolation(f"malformed patch table {path}: {exc}") from exc
    if table.size == 0:
        raise ContractViolation(f"patch table {path} is empty")
    if table.shape[1] != 6:
        raise ContractViolation(
            f"patch table rows need 6 numbers, got {table.shape[1]} in {path}")
    return PatchSet(raw_colors=table[:, :3], reference_colors=table[:, 3:])


def write_matrix_file(path, matrix: ColorMatrix, rms_residual: float) -> None:
    """Structured text: a comment header with the fit residual, then the
    3x4 rows with full float precision."""
    lines = ["# camcolor color matrix v1",
             f"# rms_residual: {rms_residual!r}"]
    for row in matrix.T:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_file(path) -> tuple[ColorMatrix, float]:
    text = Path(path).read_text().splitlines()
    rms = float("nan")
    rows = []
    for line in text:
        line = line.strip()
        if line.startswith("# rms_residual:"):
            rms = float(line.split(":", 1)[1])
        elif line and not line.startswith("#"):
            rows.append([float(v) for v in line.split()])
    if len(rows) != 3 or any(len(r) != 4 for r in rows):
        raise ContractViolation(f"matrix file {path} does not hold a 3x4 matrix")
    return ColorMatrix(np.array(rows)), rms
