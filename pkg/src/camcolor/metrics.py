"""Image quality metrics and model-analysis experiments.

PSNR on the [0,1] scale, the CIE ΔE2000 color difference (computed through
sRGB -> linear -> XYZ(D65) -> L*a*b*), the shared-feature swap experiment,
and PSNR tables over trained configuration variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation
from .network import TranslatorPair
from .pipesim import PairedSample

DIRECTIONS = ("RAW->JPEG", "JPEG->RAW", "Cycle(JPEG)")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0,1]-scaled images.

    Identical inputs return math.inf.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractViolation(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# --- sRGB -> CIELAB (D65) ---

_SRGB_TO_XYZ = np.array([[0.4124564, 0.3575761, 0.1804375],
                         [0.2126729, 0.7151522, 0.0721750],
                         [0.0193339, 0.1191920, 0.9503041]])
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Display-sRGB values in [0,1] (H,W,3 or N,3) -> L*a*b*."""
    x = np.asarray(image, dtype=np.float64)
    lin = np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65_WHITE
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)],
                   axis=-1)
    return lab


def ciede2000(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """CIE ΔE2000 between L*a*b* arrays (..., 3), kL = kC = kH = 1.

    Follows the standard implementation notes, including the degenerate-hue
    branches, so achromatic pairs come out exact with no NaN.
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    l1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    l2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c1 = np.hypot(a1, b1)
    c2 = np.hypot(a2, b2)
    cbar = 0.5 * (c1 + c2)
    c7 = cbar ** 7
    g = 0.5 * (1.0 - np.sqrt(c7 / (c7 + 25.0 ** 7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0

    dlp = l2 - l1
    dcp = c2p - c1p
    cc = c1p * c2p
    dh = h2p - h1p
    dhp = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dhp = np.where(cc == 0.0, 0.0, dhp)
    dhbig = 2.0 * np.sqrt(cc) * np.sin(np.radians(dhp) / 2.0)

    lbar = 0.5 * (l1 + l2)
    cbarp = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    habs = np.abs(h1p - h2p)
    hbar = np.where(habs <= 180.0, 0.5 * hsum,
                    np.where(hsum < 360.0, 0.5 * (hsum + 360.0),
                             0.5 * (hsum - 360.0)))
    hbar = np.where(cc == 0.0, hsum, hbar)

    t = (1.0 - 0.17 * np.cos(np.radians(hbar - 30.0))
         + 0.24 * np.cos(np.radians(2.0 * hbar))
         + 0.32 * np.cos(np.radians(3.0 * hbar + 6.0))
         - 0.20 * np.cos(np.radians(4.0 * hbar - 63.0)))
    dtheta = 30.0 * np.exp(-(((hbar - 275.0) / 25.0) ** 2))
    cbarp7 = cbarp ** 7
    rc = 2.0 * np.sqrt(cbarp7 / (cbarp7 + 25.0 ** 7))
    lm50 = (lbar - 50.0) ** 2
    sl = 1.0 + 0.015 * lm50 / np.sqrt(20.0 + lm50)
    sc = 1.0 + 0.045 * cbarp
    sh = 1.0 + 0.015 * cbarp * t
    rt = -np.sin(np.radians(2.0 * dtheta)) * rc

    tl = dlp / sl
    tc = dcp / sc
    th = dhbig / sh
    return np.sqrt(tl * tl + tc * tc + th * th + rt * tc * th)


def delta_e_2000(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-pixel ΔE2000 between two display-sRGB images."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractViolation(f"delta_e shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(ciede2000(srgb_to_lab(a), srgb_to_lab(b))))


def feature_swap(photo_a: np.ndarray, photo_b: np.ndarray,
                 pair: TranslatorPair) -> tuple[np.ndarray, np.ndarray]:
    """Re-render each photo's predicted canonical image with the OTHER
    photo's shared features. With photo_a == photo_b this reproduces the
    plain cycle prediction exactly."""
    if np.asarray(photo_a).shape != np.asarray(photo_b).shape:
        raise ContractViolation("feature_swap photos must have equal shapes")
    if pair.sharing is None:
        raise ContractViolation("feature_swap needs a model trained with sharing")
    raw_a, shared_a = pair.jpeg_to_raw(photo_a)
    raw_b, shared_b = pair.jpeg_to_raw(photo_b)
    return (pair.raw_to_jpeg(raw_a, shared_b), pair.raw_to_jpeg(raw_b, shared_a))


def cycle_predict(photo: np.ndarray, pair: TranslatorPair) -> np.ndarray:
    """JPEG -> canonical -> JPEG round trip at inference settings."""
    raw_pred, shared = pair.jpeg_to_raw(photo)
    return pair.raw_to_jpeg(raw_pred, shared)


@dataclass
class MetricReport:
    """Per-image and mean quality numbers for one translation direction."""
    direction: str
    psnr_values: np.ndarray
    delta_e_values: np.ndarray

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def mean_delta_e(self) -> float:
        return float(np.mean(self.delta_e_values))


def evaluate_pairs(pair: TranslatorPair,
                   samples: Sequence[PairedSample],
                   with_delta_e: bool = True) -> list[MetricReport]:
    """Full-resolution metrics for the three directions over aligned pairs.

    ΔE2000 for the canonical direction treats the canonical image as if
    displayed, which makes it a perceptual proxy rather than a colorimetric
    statement; PSNR is the primary number.
    """
    per = {d: ([], []) for d in DIRECTIONS}
    for s in samples:
        raw_pred, shared = pair.jpeg_to_raw(s.jpeg)
        jpeg_pred = pair.raw_to_jpeg(np.clip(s.raw, 0.0, 1.0), shared)
        cyc_pred = pair.raw_to_jpeg(raw_pred, shared)
        raw_gt = np.clip(s.raw, 0.0, 1.0)
        for d, pred, gt in (("RAW->JPEG", jpeg_pred, s.jpeg),
                            ("JPEG->RAW", raw_pred, raw_gt),
                            ("Cycle(JPEG)", cyc_pred, s.jpeg)):
            per[d][0].append(psnr(pred, gt))
            per[d][1].append(delta_e_2000(pred, gt) if with_delta_e else math.nan)
    return [MetricReport(direction=d, psnr_values=np.array(per[d][0]),
                         delta_e_values=np.array(per[d][1]))
            for d in DIRECTIONS]


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    lines = ["direction,mean_psnr,mean_delta_e"]
    for r in reports:
        lines.append(f"{r.direction},{r.mean_psnr:.4f},{r.mean_delta_e:.4f}")
    return "\n".join(lines) + "\n"


def reports_to_table(reports: Sequence[MetricReport]) -> str:
    width = max(len(r.direction) for r in reports)
    lines = [f"{'direction':<{width}}  {'PSNR(dB)':>9}  {'dE2000':>8}"]
    for r in reports:
        lines.append(f"{r.direction:<{width}}  {r.mean_psnr:>9.2f}  "
                     f"{r.mean_delta_e:>8.3f}")
    return "\n".join(lines) + "\n"


@dataclass
class AblationRow:
    label: str
    raw2jpeg: float
    jpeg2raw: float
    cycle: float


def ablation_report(dataset: Sequence[PairedSample], configs,
                    eval_samples: Optional[Sequence[PairedSample]] = None
                    ) -> list[AblationRow]:
    """Train every config and tabulate mean PSNR per direction.

    Evaluation uses ``eval_samples`` when given, else each run's own
    validation split.
    """
    from .training import train  # local import: training depends on metrics

    rows = []
    for config in configs:
        result = train(dataset, config)
        samples = eval_samples if eval_samples is not None else result.val_samples
        reports = evaluate_pairs(result.pair, samples, with_delta_e=False)
        by_dir = {r.direction: r.mean_psnr for r in reports}
        label = "{}/{}/{}".format(
            f"share-{config.share_layer}" if config.use_sharing else "no-sharing",
            config.pool_kind,
            "cycle" if config.use_cycle else "no-cycle")
        rows.append(AblationRow(label=label, raw2jpeg=by_dir["RAW->JPEG"],
                                jpeg2raw=by_dir["JPEG->RAW"],
                                cycle=by_dir["Cycle(JPEG)"]))
    return rows


def ablation_to_table(rows: Sequence[AblationRow]) -> str:
    """Aligned text table; the best value in each column is starred."""
    cols = ("raw2jpeg", "jpeg2raw", "cycle")
    best = {c: max(getattr(r, c) for r in rows) for c in cols}
    width = max(len(r.label) for r in rows)
    lines = [f"{'configuration':<{width}}  {'RAW->JPEG':>11}  {'JPEG->RAW':>11}  "
             f"{'Cycle(JPEG)':>12}"]
    for r in rows:
        cells = []
        for c, w in zip(cols, (11, 11, 12)):
            v = getattr(r, c)
            mark = "*" if v == best[c] else " "
            cells.append(f"{v:>{w - 1}.2f}{mark}")
        lines.append(f"{r.label:<{width}}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def ablation_to_csv(rows: Sequence[AblationRow]) -> str:
    lines = ["configuration,raw2jpeg_psnr,jpeg2raw_psnr,cycle_psnr"]
    for r in rows:
        lines.append(f"{r.label},{r.raw2jpeg:.4f},{r.jpeg2raw:.4f},{r.cycle:.4f}")
    return "\n".join(lines) + "\n"
