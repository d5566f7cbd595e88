"""Dual color-translation networks with multiscale learnable-histogram features.

Two small convolutional translators share one architecture: N2 maps a
camera-rendered (JPEG-domain) image back to the canonical linear space, N1
maps a canonical image to the JPEG domain. N1 additionally receives a
pooled, linearly transformed hidden activation of N2 (the "shared feature")
broadcast over space, which tells it which rendering pipeline to imitate.

Images at this layer are channels-first Tensors; use image_to_tensor /
tensor_to_image to cross over from H,W,3 numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import (ACC_DTYPE, Tensor, concat_channels, conv2d,
                       global_avg_pool, global_max_pool, linear, relu)
from .errors import ContractViolation

SHARE_LAYERS = ("conv1", "conv2")
POOL_KINDS = ("average", "max")


@dataclass(frozen=True)
class ArchConfig:
    """Structural knobs of the translator pair.

    Defaults give the full model: 6 histogram bins per color channel over a
    4-level pyramid (75 feature channels), two 128-channel hidden conv
    layers, and a 128-d shared vector. ``width``/``d_share`` exist so tests
    can run downsized copies of the same graph.
    """
    kernel_size: int = 1
    width: int = 128
    d_share: int = 128
    use_sharing: bool = True
    share_layer: str = "conv1"
    pool_kind: str = "average"
    bins: int = 6
    scales: tuple[int, ...] = (1, 2, 4, 8)

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ContractViolation(f"kernel_size must be odd, got {self.kernel_size}")
        if self.share_layer not in SHARE_LAYERS:
            raise ContractViolation(f"share_layer must be one of {SHARE_LAYERS}")
        if self.pool_kind not in POOL_KINDS:
            raise ContractViolation(f"pool_kind must be one of {POOL_KINDS}")

    @property
    def hist_channels(self) -> int:
        return 3 * self.bins * len(self.scales) + 3

    @property
    def n1_in_channels(self) -> int:
        return self.hist_channels + (self.d_share if self.use_sharing else 0)


@dataclass
class HistogramParams:
    """Learnable soft-binning parameters: per color channel, ``bins`` bin
    centers and reciprocal bin widths (kept positive by the trainer)."""
    centers: Tensor     # [3, bins]
    inv_widths: Tensor  # [3, bins]


@dataclass
class TranslatorWeights:
    """Parameters of one translator: histogram layer plus three convs."""
    hist: HistogramParams
    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    conv3_w: Tensor
    conv3_b: Tensor


@dataclass
class SharingWeights:
    """Pool-then-project transform applied to N2's shared hidden layer."""
    fc_w: Tensor  # [d_share, width]
    fc_b: Tensor  # [d_share]
    pool_kind: str = "average"


def learnable_histogram(image: Tensor, params: HistogramParams) -> Tensor:
    """Soft histogram activations a = max(0, 1 - |x - center| * inv_width).

    image: [3,H,W] -> [3*bins,H,W], channel-major over color then bin.
    Differentiable in the image and both parameter arrays away from the
    triangle's apex and support edges.
    """
    if image.data.ndim != 3 or image.data.shape[0] != 3:
        raise ContractViolation(f"histogram expects a 3,H,W image, got {image.data.shape}")
    mu = params.centers
    gam = params.inv_widths
    bins = mu.data.shape[1]
    _, h, w = image.data.shape

    d = image.data[:, None, :, :] - mu.data[:, :, None, None]     # [3,B,H,W]
    t = 1.0 - np.abs(d) * gam.data[:, :, None, None]
    out = np.maximum(t, 0.0).reshape(3 * bins, h, w)

    def margin() -> float:
        # Kinks: relu edge at t == 0 and the apex at d == 0.
        return float(min(np.abs(t).min(), np.abs(d).min())) if d.size else math.inf

    def bwd(g: np.ndarray) -> None:
        g4 = g.reshape(3, bins, h, w)
        sgn = np.sign(d)
        gated = np.where(t > 0, g4, 0.0)
        if image.requires_grad:
            gx = -(gated * sgn * gam.data[:, :, None, None]).sum(axis=1)
            image.accumulate_grad(gx.astype(image.dtype))
        if mu.requires_grad:
            gmu = (gated * sgn * gam.data[:, :, None, None]).sum(
                axis=(2, 3), dtype=ACC_DTYPE)
            mu.accumulate_grad(gmu.astype(mu.dtype))
        if gam.requires_grad:
            ggam = -(gated * np.abs(d)).sum(axis=(2, 3), dtype=ACC_DTYPE)
            gam.accumulate_grad(ggam.astype(gam.dtype))

    return Tensor(out, parents=(image, mu, gam), backward_fn=bwd,
                  kink_margin=margin)


def _grid_edges(n: int, cells: int) -> np.ndarray:
    # Cell edges at rounded equal fractions of the axis.
    return np.floor(np.arange(cells + 1) * n / cells + 0.5).astype(np.int64)


def _cell_mean_broadcast(x64: np.ndarray, cells: int) -> np.ndarray:
    """Replace every pixel of [C,H,W] with the mean over its grid cell.
    Expects (and returns) a float64 array so reductions accumulate wide."""
    _, h, w = x64.shape
    re = _grid_edges(h, cells)
    ce = _grid_edges(w, cells)
    rl = np.diff(re)
    cl = np.diff(ce)
    sums = np.add.reduceat(x64, re[:-1], axis=1)
    sums = np.add.reduceat(sums, ce[:-1], axis=2)
    means = sums / (rl[:, None] * cl[None, :])
    return np.repeat(np.repeat(means, rl, axis=1), cl, axis=2)


def multiscale_pool(acts: Tensor, scales: Sequence[int] = (1, 2, 4, 8)) -> Tensor:
    """Grid-cell average pooling at several scales, broadcast back to pixels.

    [C,H,W] -> [C*len(scales),H,W]; scale-major channel blocks. The cell
    averaging is an orthogonal projection, so the backward pass applies the
    same pooling to the incoming gradient.
    """
    if acts.data.ndim != 3:
        raise ContractViolation(f"multiscale_pool expects C,H,W, got {acts.data.shape}")
    c, h, w = acts.data.shape
    finest = max(scales)
    if h < finest or w < finest:
        raise ContractViolation(
            f"image {h}x{w} smaller than the finest {finest}x{finest} grid")
    acts64 = acts.data.astype(ACC_DTYPE, copy=False)
    out = np.concatenate([_cell_mean_broadcast(acts64, s) for s in scales],
                         axis=0).astype(acts.dtype, copy=False)

    def bwd(g: np.ndarray) -> None:
        g64 = g.astype(ACC_DTYPE, copy=False)
        total = _cell_mean_broadcast(g64[:c], scales[0])
        for i, s in enumerate(scales[1:], start=1):
            total += _cell_mean_broadcast(g64[i * c:(i + 1) * c], s)
        acts.accumulate_grad(total.astype(acts.dtype, copy=False))

    return Tensor(out, parents=(acts,), backward_fn=bwd)


def spatial_broadcast(vec: Tensor, h: int, w: int) -> Tensor:
    """Repeat a [D] vector into a [D,h,w] map; backward sums over space."""
    if vec.data.ndim != 1:
        raise ContractViolation(f"spatial_broadcast expects a vector, got {vec.data.shape}")
    out = np.broadcast_to(vec.data[:, None, None], (vec.data.shape[0], h, w)).copy()

    def bwd(g: np.ndarray) -> None:
        vec.accumulate_grad(g.sum(axis=(1, 2), dtype=ACC_DTYPE).astype(vec.dtype))

    return Tensor(out, parents=(vec,), backward_fn=bwd)


def hist_features(image: Tensor, params: HistogramParams,
                  scales: Sequence[int] = (1, 2, 4, 8)) -> Tensor:
    """Pyramid-pooled histogram activations with the image appended:
    [3,H,W] -> [3*bins*len(scales)+3, H, W]."""
    pooled = multiscale_pool(learnable_histogram(image, params), scales)
    return concat_channels(pooled, image)


def _run_translator(image: Tensor, w: TranslatorWeights, arch: ArchConfig,
                    extra: Optional[Tensor]) -> tuple[Tensor, Tensor]:
    feats = hist_features(image, w.hist, arch.scales)
    if extra is not None:
        feats = concat_channels(feats, extra)
    p = arch.kernel_size // 2
    a1 = relu(conv2d(feats, w.conv1_w, w.conv1_b, p))
    a2 = relu(conv2d(a1, w.conv2_w, w.conv2_b, p))
    out = conv2d(a2, w.conv3_w, w.conv3_b, p)
    l = a1 if arch.share_layer == "conv1" else a2
    return out, l


def forward_n2(jpeg: Tensor, weights: TranslatorWeights,
               arch: ArchConfig) -> tuple[Tensor, Tensor]:
    """JPEG-domain image -> (canonical-space prediction, shared activation l).

    l is the post-ReLU feature map of the layer picked by arch.share_layer.
    The prediction is left unclamped; clamp at inference via tensor_to_image.
    """
    return _run_translator(jpeg, weights, arch, None)


def share_transform(l: Tensor, weights: SharingWeights) -> Tensor:
    """Pool l over space (average or max) and project through the FC layer."""
    if weights.pool_kind == "average":
        pooled = global_avg_pool(l)
    else:
        pooled = global_max_pool(l)
    return linear(pooled, weights.fc_w, weights.fc_b)


def forward_n1(raw: Tensor, shared: Optional[Tensor],
               weights: TranslatorWeights, arch: ArchConfig) -> Tensor:
    """Canonical-space image (+ shared feature vector) -> JPEG-domain image.

    The shared vector is repeated across space and concatenated with the
    histogram feature stack before conv1. Pass shared=None only for
    weights built with use_sharing=False.
    """
    expected = weights.conv1_w.data.shape[1]
    if shared is None:
        extra = None
        if expected != arch.hist_channels:
            raise ContractViolation(
                f"these weights expect {expected - arch.hist_channels} shared channels")
    else:
        if shared.data.shape[0] != expected - arch.hist_channels:
            raise ContractViolation(
                f"shared vector length {shared.data.shape[0]} does not match "
                f"conv1 input ({expected - arch.hist_channels} shared channels)")
        _, h, w = raw.data.shape
        extra = spatial_broadcast(shared, h, w)
    return _run_translator(raw, weights, arch, extra)[0]


def init_histogram_params(bins: int = 6, dtype=np.float32) -> HistogramParams:
    """Centers evenly spaced in [0,1], widths tiling it edge to edge."""
    centers = (2.0 * np.arange(bins) + 1.0) / (2.0 * bins)
    mu = np.tile(centers, (3, 1)).astype(dtype)
    gam = np.full((3, bins), float(bins), dtype=dtype)
    return HistogramParams(centers=Tensor(mu, requires_grad=True),
                           inv_widths=Tensor(gam, requires_grad=True))


def _init_conv(c_out: int, c_in: int, k: int, rng: np.random.Generator,
               dtype) -> tuple[Tensor, Tensor]:
    bound = math.sqrt(1.0 / (c_in * k * k))
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype)
    return (Tensor(w, requires_grad=True),
            Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True))


def _init_translator(in_channels: int, arch: ArchConfig,
                     rng: np.random.Generator, dtype) -> TranslatorWeights:
    k = arch.kernel_size
    c1w, c1b = _init_conv(arch.width, in_channels, k, rng, dtype)
    c2w, c2b = _init_conv(arch.width, arch.width, k, rng, dtype)
    c3w, c3b = _init_conv(3, arch.width, k, rng, dtype)
    return TranslatorWeights(hist=init_histogram_params(arch.bins, dtype),
                             conv1_w=c1w, conv1_b=c1b, conv2_w=c2w,
                             conv2_b=c2b, conv3_w=c3w, conv3_b=c3b)


@dataclass
class TranslatorPair:
    """Everything learnable: N1, N2, and (optionally) the sharing transform."""
    n1: TranslatorWeights
    n2: TranslatorWeights
    sharing: Optional[SharingWeights]
    arch: ArchConfig

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for net_name, net in (("n2", self.n2), ("n1", self.n1)):
            named.append((f"{net_name}.hist.centers", net.hist.centers))
            named.append((f"{net_name}.hist.inv_widths", net.hist.inv_widths))
            for layer in ("conv1", "conv2", "conv3"):
                named.append((f"{net_name}.{layer}.w", getattr(net, f"{layer}_w")))
                named.append((f"{net_name}.{layer}.b", getattr(net, f"{layer}_b")))
        if self.sharing is not None:
            named.append(("sharing.fc.w", self.sharing.fc_w))
            named.append(("sharing.fc.b", self.sharing.fc_b))
        return named

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def clamp_hist_widths(self, floor: float = 1e-3) -> None:
        for net in (self.n1, self.n2):
            gw = net.hist.inv_widths.data
            np.maximum(gw, floor, out=gw)

    # Inference-level wrappers operating on H,W,3 numpy images.

    def jpeg_to_raw(self, jpeg_image: np.ndarray,
                    clamp: bool = True) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Predict the canonical-space image and the shared feature vector."""
        raw_t, l = forward_n2(image_to_tensor(jpeg_image), self.n2, self.arch)
        shared = None
        if self.sharing is not None:
            shared = share_transform(l, self.sharing).data.copy()
        return tensor_to_image(raw_t, clamp=clamp), shared

    def raw_to_jpeg(self, raw_image: np.ndarray,
                    shared: Optional[np.ndarray],
                    clamp: bool = True) -> np.ndarray:
        """Predict the JPEG-domain rendering of a canonical-space image."""
        shared_t = None if shared is None else Tensor(np.asarray(shared))
        out = forward_n1(image_to_tensor(raw_image), shared_t, self.n1, self.arch)
        return tensor_to_image(out, clamp=clamp)


def init_translator_pair(arch: ArchConfig = ArchConfig(), seed: int = 0,
                         dtype=np.float32) -> TranslatorPair:
    """Fresh weights; same seed and config always give identical values."""
    rng = np.random.default_rng(seed)
    n2 = _init_translator(arch.hist_channels, arch, rng, dtype)
    n1 = _init_translator(arch.n1_in_channels, arch, rng, dtype)
    sharing = None
    if arch.use_sharing:
        bound = math.sqrt(1.0 / arch.width)
        fc_w = rng.uniform(-bound, bound, size=(arch.d_share, arch.width)).astype(dtype)
        sharing = SharingWeights(fc_w=Tensor(fc_w, requires_grad=True),
                                 fc_b=Tensor(np.zeros(arch.d_share, dtype=dtype),
                                             requires_grad=True),
                                 pool_kind=arch.pool_kind)
    return TranslatorPair(n1=n1, n2=n2, sharing=sharing, arch=arch)


def image_to_tensor(image: np.ndarray, requires_grad: bool = False) -> Tensor:
    """H,W,3 array in [0,1] -> [3,H,W] graph leaf."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractViolation(f"expected an H,W,3 image, got shape {img.shape}")
    return Tensor(np.ascontiguousarray(img.transpose(2, 0, 1)),
                  requires_grad=requires_grad)


def tensor_to_image(t: Tensor, clamp: bool = True) -> np.ndarray:
    """[3,H,W] tensor -> H,W,3 array, clamped to [0,1] for inference."""
    img = t.data.transpose(1, 2, 0)
    if clamp:
        img = np.clip(img, 0.0, 1.0)
    return np.ascontiguousarray(img)
