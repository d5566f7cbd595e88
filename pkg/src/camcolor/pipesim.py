"""Simulated camera color pipelines and synthetic paired datasets.

Each pipeline renders a canonical linear image the way a simple camera
would: per-channel gains, a saturation adjustment around Rec.601 luminance,
clipping, gamma encoding, and optional 8-bit quantization. Applying many
sampled pipelines to the same scenes yields aligned canonical/JPEG-domain
pairs where one scene maps to many renderings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataError

# Encoding exponents a sampled pipeline may use (output = input^(1/gamma)).
GAMMA_CHOICES = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8)

REC601_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class PipelineSpec:
    """Parameters of one simulated rendering pipeline."""
    gains: tuple[float, float, float]
    saturation: float
    gamma: float
    quantize: bool = True
    id: int = 0

    def __post_init__(self):
        if any(g <= 0 for g in self.gains):
            raise ContractViolation(f"gains must be positive, got {self.gains}")
        if self.saturation < 0:
            raise ContractViolation(f"saturation must be >= 0, got {self.saturation}")
        if self.gamma <= 0:
            raise ContractViolation(f"gamma must be positive, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"gains": list(self.gains), "saturation": self.saturation,
                "gamma": self.gamma, "quantize": self.quantize, "id": self.id}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        return cls(gains=tuple(d["gains"]), saturation=d["saturation"],
                   gamma=d["gamma"], quantize=d["quantize"], id=d["id"])


@dataclass(frozen=True)
class SampleRanges:
    """Sampling ranges for random pipelines."""
    gain_lo: float = 0.6
    gain_hi: float = 1.4
    saturation_lo: float = 0.5
    saturation_hi: float = 1.5
    gammas: tuple[float, ...] = GAMMA_CHOICES
    quantize: bool = True


@dataclass
class PairedSample:
    """One aligned (canonical, rendered) pair; scene_id groups renderings of
    the same underlying image."""
    raw: np.ndarray
    jpeg: np.ndarray
    spec_id: int
    scene_id: int = 0


def sample_pipeline(seed: int, ranges: SampleRanges = SampleRanges()) -> PipelineSpec:
    """Deterministically draw a pipeline from the seed: per-channel gains,
    a saturation factor, and a gamma from the fixed ten-value set."""
    rng = np.random.default_rng(seed)
    gains = tuple(float(g) for g in
                  rng.uniform(ranges.gain_lo, ranges.gain_hi, size=3))
    sat = float(rng.uniform(ranges.saturation_lo, ranges.saturation_hi))
    gamma = float(ranges.gammas[rng.integers(len(ranges.gammas))])
    return PipelineSpec(gains=gains, saturation=sat, gamma=gamma,
                        quantize=ranges.quantize, id=int(seed))


def apply_pipeline(raw: np.ndarray, spec: PipelineSpec) -> np.ndarray:
    """Render a canonical linear image (values >= 0) through the pipeline.

    Stage order: gains -> saturation around post-gain luminance -> clamp to
    [0,1] -> gamma encode -> optional rounding to 1/255 steps. Output is
    float32 in [0,1].
    """
    img = np.asarray(raw, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractViolation(f"expected an H,W,3 image, got shape {img.shape}")
    if img.min() < 0:
        raise ContractViolation("canonical-space input must be non-negative")
    out = img * np.asarray(spec.gains)
    luma = out @ REC601_LUMA
    out = luma[:, :, None] + spec.saturation * (out - luma[:, :, None])
    out = np.clip(out, 0.0, 1.0)
    out = out ** (1.0 / spec.gamma)
    if spec.quantize:
        out = np.round(out * 255.0) / 255.0
    return out.astype(np.float32)


def sample_pipelines(n_pipelines: int, seed: int,
                     ranges: SampleRanges = SampleRanges()) -> list[PipelineSpec]:
    """Pipelines drawn from consecutive seeds, ids reassigned to 0..n-1 so
    they can index files and spec tables directly."""
    if n_pipelines < 1:
        raise ContractViolation(f"n_pipelines must be >= 1, got {n_pipelines}")
    return [replace(sample_pipeline(seed + i, ranges), id=i)
            for i in range(n_pipelines)]


def generate_dataset(raw_images: list[np.ndarray], n_pipelines: int,
                     seed: int) -> tuple[list[PairedSample], list[PipelineSpec]]:
    """Render every image through n_pipelines pipelines drawn from
    consecutive seeds."""
    if not raw_images:
        raise ContractViolation("generate_dataset needs at least one image")
    specs = sample_pipelines(n_pipelines, seed)
    pairs = []
    for scene, raw in enumerate(raw_images):
        raw32 = np.asarray(raw, dtype=np.float32)
        for spec in specs:
            pairs.append(PairedSample(raw=raw32,
                                      jpeg=apply_pipeline(raw32, spec),
                                      spec_id=spec.id, scene_id=scene))
    return pairs, specs


def _upsample_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    gh, gw = grid.shape[:2]
    ys = np.linspace(0.0, gh - 1.0, height)
    xs = np.linspace(0.0, gw - 1.0, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x1] * wx
    bot = grid[y1][:, x0] * (1 - wx) + grid[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def random_canonical_image(seed: int, height: int = 128,
                           width: int = 128) -> np.ndarray:
    """Procedural linear-domain test scene: layered smooth color fields plus
    a few solid color patches, values well inside [0,1]."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3))
    for cells, amp in ((2, 1.0), (4, 0.55), (8, 0.3), (16, 0.15)):
        img += amp * _upsample_bilinear(rng.random((cells, cells, 3)),
                                        height, width)
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo + 1e-9)
    # Saturated patches give every scene some strongly colored pixels.
    for _ in range(rng.integers(2, 5)):
        ph = int(rng.integers(height // 8, height // 3))
        pw = int(rng.integers(width // 8, width // 3))
        py = int(rng.integers(0, height - ph))
        px = int(rng.integers(0, width - pw))
        color = rng.random(3)
        img[py:py + ph, px:px + pw] = 0.35 * img[py:py + ph, px:px + pw] + 0.65 * color
    return (0.03 + 0.94 * img).astype(np.float32)


# Directory layout: raw/NNNN.png (16-bit), jpeg/NNNN_PPP.png (8-bit),
# specs.json mapping the zero-padded pipeline index to its fields.

def write_dataset(out_dir, raw_images: list[np.ndarray],
                  specs: list[PipelineSpec]) -> None:
    """Materialize the paired dataset. Canonical images are quantized by the
    16-bit save before the pipelines run, so the files reproduce each other
    exactly: jpeg file == apply_pipeline(raw file, spec)."""
    from .imgio import read_image_16bit, write_image_16bit, write_image_8bit

    out = Path(out_dir)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "jpeg").mkdir(parents=True, exist_ok=True)
    for scene, raw in enumerate(raw_images):
        raw_path = out / "raw" / f"{scene:04d}.png"
        write_image_16bit(raw_path, np.asarray(raw, dtype=np.float32))
        raw_q = read_image_16bit(raw_path)
        for spec in specs:
            write_image_8bit(out / "jpeg" / f"{scene:04d}_{spec.id:03d}.png",
                             apply_pipeline(raw_q, spec))
    table = {f"{spec.id:03d}": spec.to_dict() for spec in specs}
    (out / "specs.json").write_text(json.dumps(table, indent=2, sort_keys=True))


def load_dataset(data_dir) -> tuple[list[PairedSample], list[PipelineSpec]]:
    """Read a dataset written by write_dataset back into memory."""
    from .imgio import read_image_16bit, read_image_8bit

    root = Path(data_dir)
    specs_path = root / "specs.json"
    if not specs_path.exists():
        raise DataError(f"no specs.json under {root}")
    table = json.loads(specs_path.read_text())
    specs = {key: PipelineSpec.from_dict(val) for key, val in table.items()}
    raw_files = sorted((root / "raw").glob("*.png"))
    if not raw_files:
        raise DataError(f"no canonical images under {root / 'raw'}")
    pairs = []
    for raw_path in raw_files:
        scene = int(raw_path.stem)
        raw = read_image_16bit(raw_path)
        for jpeg_path in sorted((root / "jpeg").glob(f"{raw_path.stem}_*.png")):
            key = jpeg_path.stem.split("_")[1]
            if key not in specs:
                raise DataError(f"{jpeg_path.name} has no entry in specs.json")
            pairs.append(PairedSample(raw=raw, jpeg=read_image_8bit(jpeg_path),
                                      spec_id=specs[key].id, scene_id=scene))
    return pairs, [specs[k] for k in sorted(specs)]
