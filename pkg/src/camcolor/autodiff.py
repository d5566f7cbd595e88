"""Minimal reverse-mode differentiation engine.

Tensors wrap a C-contiguous numpy array (float32 by default, float64 for
gradient checking) together with an accumulated gradient buffer. Every
operation allocates a fresh output tensor that remembers its parents and a
backward closure; ``backward()`` replays those closures in reverse
topological order and then drops the graph, so gradients keep accumulating
across separate backward calls until ``zero_grad()``.

Only the handful of operations the translation networks need is provided.
Custom differentiable ops (histogram features, pyramid pooling, ...) are
built elsewhere by constructing Tensors with explicit parents/backward_fn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation

DEFAULT_DTYPE = np.float32

# Reductions accumulate in float64 regardless of storage dtype; this keeps
# pooled means stable in the float32 default configuration.
ACC_DTYPE = np.float64


class Tensor:
    """Array value plus gradient, recorded in the computation graph.

    ``kink_margin`` is set by non-smooth ops (relu, max pool, histogram) to
    the distance of the nearest input to the op's kink; the gradient-check
    harness uses it to reject probe points too close to a kink. It may be a
    zero-argument callable (evaluated lazily, so training never pays for it);
    read margins before any in-place parameter update.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "kink_margin")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (),
                 backward_fn: Optional[Callable[[np.ndarray], None]] = None,
                 kink_margin=None):
        # float64 must be requested via an ndarray of that dtype (the
        # gradient-check path); everything else stores float32.
        keep64 = isinstance(data, np.ndarray) and data.dtype == np.float64
        arr = np.asarray(data)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if not (keep64 or arr.dtype == np.float32):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.kink_margin = kink_margin
        needs = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.requires_grad = needs
        if needs and backward_fn is not None:
            self._parents = tuple(parents)
            self._backward_fn = backward_fn
        else:
            # Leaf, or an op none of whose inputs need gradients: no record.
            self._parents = ()
            self._backward_fn = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True) \
                if g.dtype != self.data.dtype else g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    def detach(self) -> "Tensor":
        """Same values, out of the graph, never requiring gradients."""
        return Tensor(self.data)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, c: float) -> "Tensor":
        return scale(self, c)

    def __rmul__(self, c: float) -> "Tensor":
        return scale(self, c)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    """Post-order over the recorded subgraph that requires gradients."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf, then drop
    the graph record so its tensors can be freed."""
    if loss.data.size != 1:
        raise ContractViolation(
            f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(order):
        fn = node._backward_fn
        if fn is None:
            continue
        fn(node.grad)
        node._parents = ()
        node._backward_fn = None


def _check_chw(t: Tensor, name: str) -> None:
    if t.data.ndim != 3:
        raise ContractViolation(f"{name} must be C,H,W, got shape {t.data.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor, padding: int) -> Tensor:
    """Same-size cross-correlation with per-channel bias.

    x: [C_in,H,W], w: [C_out,C_in,k,k] with k odd, b: [C_out],
    padding == k//2 so spatial size is preserved.
    """
    _check_chw(x, "conv2d input")
    if w.data.ndim != 4 or w.data.shape[2] != w.data.shape[3]:
        raise ContractViolation(f"conv2d weights must be O,I,k,k, got {w.data.shape}")
    c_out, c_in, k, _ = w.data.shape
    if k % 2 != 1:
        raise ContractViolation(f"kernel size must be odd, got {k}")
    if padding != k // 2:
        raise ContractViolation(
            f"padding {padding} does not preserve spatial size for k={k}")
    if x.data.shape[0] != c_in:
        raise ContractViolation(
            f"conv2d expects {c_in} input channels, got {x.data.shape[0]}")
    if b.data.shape != (c_out,):
        raise ContractViolation(f"bias must have shape ({c_out},), got {b.data.shape}")

    _, h, wd = x.data.shape
    if k == 1:
        w2 = w.data.reshape(c_out, c_in)
        out = np.tensordot(w2, x.data, axes=([1], [0])) + b.data[:, None, None]
    else:
        xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))  # [C_in,H,W,k,k]
        out = np.tensordot(w.data, win, axes=([1, 2, 3], [0, 3, 4]))
        out += b.data[:, None, None]

    def bwd(g: np.ndarray) -> None:
        b.accumulate_grad(g.sum(axis=(1, 2), dtype=ACC_DTYPE).astype(g.dtype))
        if k == 1:
            w2d = w.data.reshape(c_out, c_in)
            gw = np.tensordot(g.reshape(c_out, -1),
                              x.data.reshape(c_in, -1), axes=([1], [1]))
            w.accumulate_grad(gw.reshape(w.data.shape))
            x.accumulate_grad(np.tensordot(w2d.T, g, axes=([1], [0])))
        else:
            xp2 = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
            win2 = sliding_window_view(xp2, (k, k), axis=(1, 2))
            gw = np.tensordot(g, win2, axes=([1, 2], [1, 2]))  # [C_out,C_in,k,k]
            w.accumulate_grad(gw)
            gp = np.pad(g, ((0, 0), (padding, padding), (padding, padding)))
            gwin = sliding_window_view(gp, (k, k), axis=(1, 2))  # [C_out,H,W,k,k]
            wflip = w.data[:, :, ::-1, ::-1]
            gx = np.tensordot(wflip, gwin, axes=([0, 2, 3], [0, 3, 4]))
            x.accumulate_grad(gx)

    return Tensor(out, parents=(x, w, b), backward_fn=bwd)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); zero subgradient at x == 0."""
    xd = x.data
    out = np.maximum(xd, 0)

    def bwd(g: np.ndarray) -> None:
        x.accumulate_grad(g * (xd > 0))

    def margin() -> float:
        return float(np.abs(xd).min()) if xd.size else math.inf

    return Tensor(out, parents=(x,), backward_fn=bwd, kink_margin=margin)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack [C1,H,W] and [C2,H,W] along channels, a first."""
    _check_chw(a, "concat input a")
    _check_chw(b, "concat input b")
    if a.data.shape[1:] != b.data.shape[1:]:
        raise ContractViolation(
            f"spatial mismatch in concat: {a.data.shape} vs {b.data.shape}")
    c1 = a.data.shape[0]
    out = np.concatenate([a.data, b.data], axis=0)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g[:c1])
        if b.requires_grad:
            b.accumulate_grad(g[c1:])

    return Tensor(out, parents=(a, b), backward_fn=bwd)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: [C,H,W] -> [C]."""
    _check_chw(x, "global_avg_pool input")
    _, h, w = x.data.shape
    out = x.data.mean(axis=(1, 2), dtype=ACC_DTYPE).astype(x.dtype)

    def bwd(g: np.ndarray) -> None:
        x.accumulate_grad(np.broadcast_to((g / (h * w))[:, None, None],
                                          x.data.shape).astype(x.dtype))

    return Tensor(out, parents=(x,), backward_fn=bwd)


def global_max_pool(x: Tensor) -> Tensor:
    """Per-channel spatial max; gradient goes to the first maximal position."""
    _check_chw(x, "global_max_pool input")
    c, h, w = x.data.shape
    flat = x.data.reshape(c, -1)
    idx = flat.argmax(axis=1)
    out = flat[np.arange(c), idx]

    def margin() -> float:
        if flat.shape[1] <= 1:
            return math.inf
        top2 = np.partition(flat, flat.shape[1] - 2, axis=1)[:, -2:]
        return float((top2[:, 1] - top2[:, 0]).min())

    def bwd(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        gx.reshape(c, -1)[np.arange(c), idx] = g
        x.accumulate_grad(gx)

    return Tensor(out, parents=(x,), backward_fn=bwd, kink_margin=margin)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map: [D_in] -> [D_out]."""
    if x.data.ndim != 1 or w.data.ndim != 2 or w.data.shape[1] != x.data.shape[0]:
        raise ContractViolation(
            f"linear shape mismatch: x {x.data.shape}, w {w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ContractViolation(f"linear bias shape {b.data.shape} != ({w.data.shape[0]},)")
    out = w.data @ x.data + b.data

    def bwd(g: np.ndarray) -> None:
        w.accumulate_grad(np.outer(g, x.data))
        b.accumulate_grad(g)
        x.accumulate_grad(w.data.T @ g)

    return Tensor(out, parents=(x, w, b), backward_fn=bwd)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared elementwise differences, as a scalar tensor."""
    if pred.data.shape != target.data.shape:
        raise ContractViolation(
            f"mse shape mismatch: {pred.data.shape} vs {target.data.shape}")
    if target.requires_grad:
        raise ContractViolation("mse target must not require gradients")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.mean(np.square(diff, dtype=ACC_DTYPE)),
                     dtype=pred.dtype)

    def bwd(g: np.ndarray) -> None:
        pred.accumulate_grad(diff * (float(g) * 2.0 / n))

    return Tensor(out, parents=(pred,), backward_fn=bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ContractViolation(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return Tensor(out, parents=(a, b), backward_fn=bwd)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)
    out = x.data * np.asarray(c, dtype=x.dtype)

    def bwd(g: np.ndarray) -> None:
        x.accumulate_grad((g * c).astype(x.dtype))

    return Tensor(out, parents=(x,), backward_fn=bwd)


def sum_tensors(ts: Iterable[Tensor]) -> Tensor:
    ts = list(ts)
    out = ts[0]
    for t in ts[1:]:
        out = add(out, t)
    return out


def min_kink_margin(root: Tensor) -> float:
    """Smallest kink margin recorded anywhere in root's graph (inf if none).

    Must run before backward(), which drops the graph.
    """
    best = math.inf
    seen: set[int] = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        m = node.kink_margin
        if m is not None:
            best = min(best, m() if callable(m) else m)
        stack.extend(node._parents)
    return best


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients to central differences."""
    max_rel_error: float
    kink_margin: float
    step: float
    tolerance: float
    n_checked: int

    @property
    def near_kink(self) -> bool:
        # Probe point too close to a non-smooth locus for the finite
        # difference to be trustworthy; resample the probe instead of
        # reading anything into max_rel_error.
        return self.kink_margin < 10.0 * self.step

    @property
    def ok(self) -> bool:
        return (not self.near_kink) and self.max_rel_error <= self.tolerance


# Gradients at or below this magnitude are compared absolutely instead of
# relatively.
_REL_FLOOR = 1e-6


def gradient_check(fn, inputs: Sequence, step: float = 1e-4,
                   tolerance: float = 1e-4, max_coords: Optional[int] = None,
                   seed: int = 0) -> GradCheckReport:
    """Check d(fn)/d(inputs) against central finite differences.

    fn must map the probe tensors to a deterministic scalar Tensor. Probes
    are float64 copies of ``inputs`` (arrays or Tensors) so the difference
    quotient is not drowned by storage rounding. When ``max_coords`` is set,
    at most that many coordinates per input are sampled (seeded).
    """
    probes = []
    for t in inputs:
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        probes.append(Tensor(arr.astype(np.float64), requires_grad=True))

    loss = fn(*probes)
    margin = min_kink_margin(loss)
    backward(loss)
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
             for p in probes]
    for p in probes:
        p.zero_grad()

    rng = np.random.default_rng(seed)
    max_rel = 0.0
    n_checked = 0
    for p, g in zip(probes, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            hi = fn(*probes).item()
            flat[i] = orig - step
            lo = fn(*probes).item()
            flat[i] = orig
            num = (hi - lo) / (2.0 * step)
            ana = float(gflat[i])
            denom = max(abs(num), abs(ana))
            if denom <= _REL_FLOOR:
                err = abs(num - ana)
            else:
                err = abs(num - ana) / denom
            max_rel = max(max_rel, err)
            n_checked += 1

    return GradCheckReport(max_rel_error=max_rel, kink_margin=margin,
                           step=step, tolerance=tolerance, n_checked=n_checked)
