"""PNG image I/O. Canonical/linear-domain data uses 16-bit files for
headroom precision; rendered (JPEG-domain) data uses 8-bit files. In memory
everything is float32 H,W,3 (or H,W for masks) scaled to [0,1]."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import DataError


def _read(path, flags):
    img = cv2.imread(str(path), flags)
    if img is None:
        raise DataError(f"cannot read image file {path}")
    return img


def write_image_16bit(path, image: np.ndarray) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u16 = np.round(img * 65535.0).astype(np.uint16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), u16[:, :, ::-1])


def read_image_16bit(path) -> np.ndarray:
    img = _read(path, cv2.IMREAD_UNCHANGED)
    if img.dtype != np.uint16 or img.ndim != 3:
        raise DataError(f"{path} is not a 16-bit color image")
    return (img[:, :, ::-1].astype(np.float32) / 65535.0)


def write_image_8bit(path, image: np.ndarray) -> None:
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(img * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), u8[:, :, ::-1])


def read_image_8bit(path) -> np.ndarray:
    img = _read(path, cv2.IMREAD_COLOR)
    return (img[:, :, ::-1].astype(np.float32) / 255.0)


def read_mask_8bit(path) -> np.ndarray:
    """Grayscale mask file -> H,W float32 in [0,1] (255 = fully object)."""
    img = _read(path, cv2.IMREAD_GRAYSCALE)
    return img.astype(np.float32) / 255.0


def write_mask_8bit(path, mask: np.ndarray) -> None:
    m = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), np.round(m * 255.0).astype(np.uint8))
