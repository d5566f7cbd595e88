"""Joint training of the translator pair.

One optimization step draws a group-balanced batch of aligned pairs,
augments each pair (shared flips, shared square crop, resize), and descends
the summed objective: JPEG-domain reconstruction + canonical-space
reconstruction + weighted cycle reconstruction, each a per-element MSE.
Adam with bias correction; histogram inverse widths are clamped positive
after every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from .autodiff import Tensor, backward, mse_loss, scale, sum_tensors
from .errors import ContractViolation, NumericalFailure
from .metrics import psnr
from .network import (ArchConfig, TranslatorPair, forward_n1, forward_n2,
                      image_to_tensor, init_translator_pair, share_transform)
from .pipesim import PairedSample


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and ablation knobs; defaults are the full model."""
    learning_rate: float = 1e-3
    cycle_weight: float = 1.0
    batch_size: int = 8
    crop_min: int = 128
    crop_out: int = 256
    flip_prob: float = 0.5
    steps: int = 5000
    seed: int = 0
    use_cycle: bool = True
    use_sharing: bool = True
    share_layer: str = "conv1"
    pool_kind: str = "average"
    kernel_size: int = 1
    width: int = 128
    d_share: int = 128
    log_every: int = 100
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if self.cycle_weight < 0:
            raise ContractViolation("cycle_weight must be >= 0")
        if self.batch_size < 1 or self.steps < 0:
            raise ContractViolation("batch_size >= 1 and steps >= 0 required")
        if self.log_every < 1:
            raise ContractViolation("log_every must be >= 1")

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig(kernel_size=self.kernel_size, width=self.width,
                          d_share=self.d_share, use_sharing=self.use_sharing,
                          share_layer=self.share_layer, pool_kind=self.pool_kind)


class Adam:
    """Adam with bias correction; treats missing gradients as zero."""

    def __init__(self, params: Sequence[tuple[str, Tensor]],
                 lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, (_, p) in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / b1c
            vhat = self.v[i] / b2c
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


def augment_pair(raw: np.ndarray, jpeg: np.ndarray,
                 rng: np.random.Generator, crop_min: int = 128,
                 crop_out: int = 256,
                 flip_prob: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Identically flip and crop both images, then resize to crop_out².

    Crop side is uniform in [crop_min, min(H,W)], position uniform among
    valid top-left corners; resize is bilinear. Both images must have equal
    dimensions of at least crop_min per side.
    """
    raw = np.asarray(raw)
    jpeg = np.asarray(jpeg)
    if raw.shape != jpeg.shape:
        raise ContractViolation(f"pair shape mismatch: {raw.shape} vs {jpeg.shape}")
    h, w = raw.shape[:2]
    if min(h, w) < crop_min:
        raise ContractViolation(f"image {h}x{w} smaller than crop_min={crop_min}")
    if rng.random() < flip_prob:
        raw, jpeg = raw[:, ::-1], jpeg[:, ::-1]
    if rng.random() < flip_prob:
        raw, jpeg = raw[::-1], jpeg[::-1]
    side = int(rng.integers(crop_min, min(h, w) + 1))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = []
    for img in (raw, jpeg):
        crop = np.ascontiguousarray(img[top:top + side, left:left + side],
                                    dtype=np.float32)
        out.append(cv2.resize(crop, (crop_out, crop_out),
                              interpolation=cv2.INTER_LINEAR))
    return out[0], out[1]


def total_loss(raw: np.ndarray, jpeg: np.ndarray, pair: TranslatorPair,
               config: TrainConfig) -> Tensor:
    """Training objective for one aligned pair.

    L = mse(jpeg, N1(raw, f(l))) + mse(raw, N2(jpeg))
        + cycle_weight * mse(jpeg, N1(N2(jpeg), f(l)))
    with l the shared activation of N2 run on the real jpeg. The cycle term
    is dropped when use_cycle is off; N1 runs unconditioned when the pair
    was built without sharing. Predictions stay unclamped here.
    """
    raw_t = image_to_tensor(raw)
    jpeg_t = image_to_tensor(jpeg)
    if raw_t.data.shape != jpeg_t.data.shape:
        raise ContractViolation(
            f"pair shape mismatch: {raw_t.data.shape} vs {jpeg_t.data.shape}")
    raw_pred, l = forward_n2(jpeg_t, pair.n2, pair.arch)
    shared = None
    if pair.sharing is not None:
        shared = share_transform(l, pair.sharing)
    jpeg_pred = forward_n1(raw_t, shared, pair.n1, pair.arch)
    loss = mse_loss(jpeg_pred, jpeg_t) + mse_loss(raw_pred, raw_t)
    if config.use_cycle:
        cyc_pred = forward_n1(raw_pred, shared, pair.n1, pair.arch)
        loss = loss + scale(mse_loss(cyc_pred, jpeg_t), config.cycle_weight)
    return loss


def split_by_scene(dataset: Sequence[PairedSample], seed: int,
                   val_fraction: float = 0.2
                   ) -> tuple[list[PairedSample], list[PairedSample]]:
    """Deterministic train/val split on scene identity (falls back to a
    per-sample split when everything is one scene)."""
    scenes = sorted({s.scene_id for s in dataset})
    rng = np.random.default_rng(seed)
    if len(scenes) >= 2:
        order = rng.permutation(len(scenes))
        n_val = max(1, int(round(len(scenes) * val_fraction)))
        n_val = min(n_val, len(scenes) - 1)
        val_scenes = {scenes[i] for i in order[:n_val]}
        train = [s for s in dataset if s.scene_id not in val_scenes]
        val = [s for s in dataset if s.scene_id in val_scenes]
    else:
        order = rng.permutation(len(dataset))
        n_val = max(1, int(round(len(dataset) * val_fraction))) \
            if len(dataset) > 1 else 0
        val_idx = set(order[:n_val].tolist())
        train = [s for i, s in enumerate(dataset) if i not in val_idx]
        val = [s for i, s in enumerate(dataset) if i in val_idx]
    return train, val


def _balanced_batch_indices(group_members: list[np.ndarray], batch_size: int,
                            step: int, rng: np.random.Generator) -> list[int]:
    """Per-batch group counts differ by at most one; the remainder rotates
    deterministically across steps."""
    n_groups = len(group_members)
    base = batch_size // n_groups
    extra = batch_size % n_groups
    chosen = []
    for gi in range(n_groups):
        count = base + (1 if (gi - step) % n_groups < extra else 0)
        members = group_members[gi]
        picks = rng.integers(0, len(members), size=count)
        chosen.extend(int(members[p]) for p in picks)
    return chosen


def validation_psnr(pair: TranslatorPair,
                    samples: Sequence[PairedSample]) -> tuple[float, float, float]:
    """Frozen-weights full-image mean PSNR per direction (nan when empty)."""
    if not samples:
        return (math.nan, math.nan, math.nan)
    acc = [[], [], []]
    for s in samples:
        raw_gt = np.clip(s.raw, 0.0, 1.0)
        raw_pred, shared = pair.jpeg_to_raw(s.jpeg)
        acc[0].append(psnr(pair.raw_to_jpeg(raw_gt, shared), s.jpeg))
        acc[1].append(psnr(raw_pred, raw_gt))
        acc[2].append(psnr(pair.raw_to_jpeg(raw_pred, shared), s.jpeg))
    return tuple(float(np.mean(a)) for a in acc)


def evaluate(pair: TranslatorPair, samples: Sequence[PairedSample]) -> dict:
    """Mean PSNR per direction over full-resolution images."""
    r2j, j2r, cyc = validation_psnr(pair, samples)
    return {"RAW->JPEG": r2j, "JPEG->RAW": j2r, "Cycle(JPEG)": cyc}


@dataclass
class TrainResult:
    pair: TranslatorPair
    history: list[tuple]          # (step, train_loss, psnr r2j, j2r, cycle)
    best_step: int
    train_samples: list[PairedSample]
    val_samples: list[PairedSample]


def _sample_rng(seed: int, step: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, step, slot)))


def _assemble_batch(train_set, group_members, config, step):
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, step)))
    idxs = _balanced_batch_indices(group_members, config.batch_size, step, rng)
    batch = []
    for slot, idx in enumerate(idxs):
        s = train_set[idx]
        batch.append(augment_pair(np.clip(s.raw, 0.0, 1.0), s.jpeg,
                                  _sample_rng(config.seed, step, slot),
                                  crop_min=config.crop_min,
                                  crop_out=config.crop_out,
                                  flip_prob=config.flip_prob))
    return batch


def train(dataset: Sequence[PairedSample], config: TrainConfig,
          groups: Optional[Sequence[int]] = None,
          log_path=None) -> TrainResult:
    """Run config.steps Adam steps and return the best-validation weights.

    The dataset splits 4:1 into train/val by scene (seeded). Batches are
    balanced across source groups when ``groups`` labels are given. Every
    config.log_every steps the current batch loss and frozen-weight
    validation PSNRs are logged (and appended to log_path when given); the
    checkpoint with the highest mean of the three validation PSNRs wins.
    """
    dataset = list(dataset)
    if not dataset:
        raise ContractViolation("train needs a nonempty dataset")
    if groups is not None and len(groups) != len(dataset):
        raise ContractViolation("groups must parallel the dataset")

    train_set, val_set = split_by_scene(dataset, config.seed,
                                        config.val_fraction)
    if groups is None:
        group_of = {id(s): 0 for s in train_set}
    else:
        by_id = {id(s): g for s, g in zip(dataset, groups)}
        group_of = {id(s): by_id[id(s)] for s in train_set}
    labels = sorted(set(group_of.values()))
    group_members = [np.array([i for i, s in enumerate(train_set)
                               if group_of[id(s)] == lab]) for lab in labels]
    if any(len(m) == 0 for m in group_members):
        raise ContractViolation("every group needs at least one training sample")

    pair = init_translator_pair(config.arch, seed=config.seed)
    opt = Adam(pair.parameters(), lr=config.learning_rate)

    history = []
    best_score = -math.inf
    best_step = 0
    best_state = [p.data.copy() for _, p in pair.parameters()]
    log_file = open(log_path, "a") if log_path is not None else None

    def batch_loss(step: int) -> Tensor:
        batch = _assemble_batch(train_set, group_members, config, step)
        losses = [total_loss(raw, jpeg, pair, config) for raw, jpeg in batch]
        return scale(sum_tensors(losses), 1.0 / len(losses))

    def log_point(step: int, loss_value: float) -> None:
        nonlocal best_score, best_step, best_state
        r2j, j2r, cyc = validation_psnr(pair, val_set)
        history.append((step, loss_value, r2j, j2r, cyc))
        if log_file is not None:
            log_file.write(f"{step},{loss_value:.6f},{r2j:.4f},{j2r:.4f},{cyc:.4f}\n")
            log_file.flush()
        score = np.nanmean([r2j, j2r, cyc]) if val_set else float(step)
        if score > best_score:
            best_score = score
            best_step = step
            best_state = [p.data.copy() for _, p in pair.parameters()]

    try:
        loss0 = batch_loss(0)
        log_point(0, loss0.item())
        for step in range(1, config.steps + 1):
            pair.zero_grad()
            loss = batch_loss(step)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalFailure(
                    f"non-finite training loss {value} at step {step} "
                    f"(lr={config.learning_rate}, seed={config.seed})")
            backward(loss)
            opt.step()
            pair.clamp_hist_widths()
            if step % config.log_every == 0:
                log_point(step, value)
    finally:
        if log_file is not None:
            log_file.close()

    for (_, p), saved in zip(pair.parameters(), best_state):
        p.data = saved
    return TrainResult(pair=pair, history=history, best_step=best_step,
                       train_samples=train_set, val_samples=val_set)
