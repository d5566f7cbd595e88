"""Composite a canonical-space rendered object into a photo.

The photo is pulled back into the canonical space by the JPEG->RAW network
(which also yields the shared pipeline features), the object is mask-blended
there, and the result is re-rendered by the RAW->JPEG network conditioned on
those features. Background pixels (mask == 0) pass through bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .network import TranslatorPair


@dataclass
class RenderedObject:
    """Object colors in the canonical linear space plus its coverage mask
    (1 = fully object; fractional values blend anti-aliased edges)."""
    rgb: np.ndarray   # [H,W,3], >= 0
    mask: np.ndarray  # [H,W] in [0,1]

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=np.float32)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ContractViolation(f"object rgb must be H,W,3, got {self.rgb.shape}")
        if self.mask.shape != self.rgb.shape[:2]:
            raise ContractViolation(
                f"mask {self.mask.shape} does not match rgb {self.rgb.shape[:2]}")
        if self.mask.min() < 0 or self.mask.max() > 1:
            raise ContractViolation("mask values must lie in [0,1]")
        if not np.isfinite(self.rgb).all() or self.rgb.min() < 0:
            raise ContractViolation("object rgb must be finite and >= 0")


@dataclass
class CompositeResult:
    """All intermediates of one compositing run."""
    raw_pred: np.ndarray     # photo pulled into the canonical space
    blended_raw: np.ndarray  # object blended over raw_pred
    jpeg_pred: np.ndarray    # blended canonical image re-rendered
    final: np.ndarray        # jpeg_pred inside the mask, photo outside


def blend_raw(obj: RenderedObject, raw_background: np.ndarray) -> np.ndarray:
    """Per-pixel convex combination mask*rgb + (1-mask)*background."""
    bg = np.asarray(raw_background, dtype=np.float32)
    if bg.shape != obj.rgb.shape:
        raise ContractViolation(
            f"background {bg.shape} does not match object {obj.rgb.shape}")
    m = obj.mask[:, :, None]
    return m * obj.rgb + (1.0 - m) * bg


def composite_object(photo_jpeg: np.ndarray, obj: RenderedObject,
                     pair: TranslatorPair) -> CompositeResult:
    """Run the full compositing chain on an H,W,3 photo.

    The shared features come from the original photo, not from the blended
    canonical image, so the re-rendering imitates the photo's own pipeline.
    Network outputs are clamped to [0,1] (inference).
    """
    photo = np.asarray(photo_jpeg, dtype=np.float32)
    if photo.shape != obj.rgb.shape:
        raise ContractViolation(
            f"photo {photo.shape} does not match object {obj.rgb.shape}")
    raw_pred, shared = pair.jpeg_to_raw(photo)
    blended = blend_raw(obj, raw_pred)
    jpeg_pred = pair.raw_to_jpeg(blended, shared)
    m = obj.mask[:, :, None]
    final = m * jpeg_pred + (1.0 - m) * photo
    return CompositeResult(raw_pred=raw_pred, blended_raw=blended,
                           jpeg_pred=jpeg_pred, final=final)
