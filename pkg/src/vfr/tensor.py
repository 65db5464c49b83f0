"""Dense float32 tensors with tape-recorded reverse-mode gradients.

Every forward op is a plain function taking :class:`Tensor` inputs. While a
:class:`Tape` is active (``with Tape() as tape:``) ops whose inputs require
gradients are recorded, and :func:`backward` replays them in reverse. Outside
a tape nothing is recorded, so inference against frozen parameters is pure.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float32


class ContractError(ValueError):
    """An op was called with inputs violating its shape or value contract."""


class DegenerateStatisticsError(ContractError):
    """Batch statistics requested over a single element per channel."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        a = np.asarray(data, dtype=DTYPE)
        self.data = a if a.flags.c_contiguous else a.copy()   # ascontiguousarray would promote 0-d
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------
# Tape


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out, inputs, backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_local = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops, consumed by one :func:`backward` call."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap ``out_data`` and record the op if any input needs a gradient.

    ``backward_fn(grad_out, needs)`` returns one gradient (or None) per input;
    ``needs[i]`` says whether input ``i`` wants one, so unused work is skipped.
    """
    tape = _active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data if out_data.dtype == DTYPE else out_data.astype(DTYPE)
    out.requires_grad = needs_grad
    out.grad = None
    out.name = None
    if needs_grad:
        tape.nodes.append(_Node(out, tuple(inputs), backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf on the tape.

    Gradients add onto whatever is already in ``.grad``; clear them with
    ``zero_grad`` between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise ContractError("tape already consumed by a previous backward pass")
    tape.consumed = True
    produced = {id(node.out) for node in tape.nodes}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        needs = [t.requires_grad for t in node.inputs]
        in_grads = node.backward_fn(g, needs)
        for t, need, gi in zip(node.inputs, needs, in_grads):
            if not need or gi is None:
                continue
            if id(t) in produced:
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
            else:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += gi.astype(DTYPE, copy=False)
    tape.nodes.clear()


# --------------------------------------------------------------------------
# Elementwise and reductions


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _record(a.data + b.data, (a, b), lambda g, n: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b), lambda g, n: (g * bd if n[0] else None, g * ad if n[1] else None))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _record(np.asarray(x.data.sum(), dtype=DTYPE), (x,), lambda g, n: (np.full(shape, g, DTYPE),))


def mean_all(x: Tensor) -> Tensor:
    shape, m = x.shape, x.size
    return _record(np.asarray(x.data.mean(), dtype=DTYPE), (x,), lambda g, n: (np.full(shape, g / m, DTYPE),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _record(np.where(pos, x.data, DTYPE(0)), (x,), lambda g, n: (g * pos,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(DTYPE)
    return _record(out, (x,), lambda g, n: (g * out * (1.0 - out),))


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over axis 1 of an (N, C) tensor."""
    if x.data.ndim != 2:
        raise ContractError(f"softmax expects (N, C), got {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def bw(g, n):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _record(p, (x,), bw)


# --------------------------------------------------------------------------
# Layer ops


def _check_rank(x: Tensor, rank: int, op: str) -> None:
    if x.data.ndim != rank:
        raise ContractError(f"{op}: expected rank-{rank} input, got shape {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation, NCHW input and (Cout, Cin, k, k) weight."""
    _check_rank(x, 4, "conv2d")
    _check_rank(w, 4, "conv2d weight")
    n, c, h, wd = x.shape
    cout, cin, k, k2 = w.shape
    if cin != c:
        raise ContractError(f"conv2d: input channels {c} != weight in_channels {cin}")
    if k != k2:
        raise ContractError(f"conv2d: non-square kernel {k}x{k2}")
    if b.shape != (cout,):
        raise ContractError(f"conv2d: bias shape {b.shape} != out_channels ({cout},)")
    if stride < 1 or pad < 0:
        raise ContractError(f"conv2d: bad stride={stride} / pad={pad}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ContractError(f"conv2d: kernel {k} larger than padded input {h}x{wd}")

    # im2col in channels-last order: each of the k*k shifted views is a
    # contiguous-in-channel slice, which copies much faster than a window view
    xt = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))
    if pad:
        xt = np.pad(xt, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    cols = np.concatenate([xt[:, i:i + he:stride, j:j + we:stride, :] for i in range(k) for j in range(k)],
                          axis=-1).reshape(n * ho * wo, k * k * c)
    wmat = w.data.transpose(0, 2, 3, 1).reshape(cout, k * k * c)
    out = cols @ wmat.T
    out += b.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    def bw(g, needs):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        dx = dw = db = None
        if needs[1]:
            dw = (g2.T @ cols).reshape(cout, k, k, c).transpose(0, 3, 1, 2)
        if needs[2]:
            db = g2.sum(axis=0)
        if needs[0]:
            dcols = (g2 @ wmat).reshape(n, ho, wo, k, k, c)
            dxt = np.zeros(xt.shape, dtype=DTYPE)
            for i in range(k):
                for j in range(k):
                    dxt[:, i:i + he:stride, j:j + we:stride, :] += dcols[:, :, :, i, j, :]
            if pad:
                dxt = dxt[:, pad:pad + h, pad:pad + wd, :]
            dx = dxt.transpose(0, 3, 1, 2)
        return dx, dw, db

    return _record(out, (x, w, b), bw)


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor, stride: int = 2) -> Tensor:
    """Transposed convolution with (Cin, Cout, k, k) weight; output (H-1)*s + k."""
    _check_rank(x, 4, "conv2d_transpose")
    _check_rank(w, 4, "conv2d_transpose weight")
    n, c, h, wd = x.shape
    cin, cout, k, k2 = w.shape
    if cin != c:
        raise ContractError(f"conv2d_transpose: input channels {c} != weight in_channels {cin}")
    if k != k2:
        raise ContractError(f"conv2d_transpose: non-square kernel {k}x{k2}")
    if b.shape != (cout,):
        raise ContractError(f"conv2d_transpose: bias shape {b.shape} != out_channels ({cout},)")
    if stride < 1:
        raise ContractError(f"conv2d_transpose: bad stride={stride}")
    ho, wo = (h - 1) * stride + k, (wd - 1) * stride + k

    x2 = x.data.transpose(0, 2, 3, 1).reshape(-1, c)
    wmat = w.data.reshape(c, cout * k * k)
    y = (x2 @ wmat).reshape(n, h, wd, cout, k, k)
    out = np.zeros((n, cout, ho, wo), dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (wd - 1) + 1:stride] += \
                y[..., i, j].transpose(0, 3, 1, 2)
    out += b.data[None, :, None, None]

    def bw(g, needs):
        dy = np.empty((n, h, wd, cout, k, k), dtype=DTYPE)
        for i in range(k):
            for j in range(k):
                dy[..., i, j] = g[:, :, i:i + stride * (h - 1) + 1:stride,
                                  j:j + stride * (wd - 1) + 1:stride].transpose(0, 2, 3, 1)
        dy2 = dy.reshape(-1, cout * k * k)
        dx = dw = db = None
        if needs[0]:
            dx = np.ascontiguousarray((dy2 @ wmat.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2))
        if needs[1]:
            dw = (x2.T @ dy2).reshape(w.shape)
        if needs[2]:
            db = g.sum(axis=(0, 2, 3))
        return dx, dw, db

    return _record(out, (x, w, b), bw)


def maxpool2x2(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """Non-overlapping 2x2 max pooling; returns the output and window argmax.

    Ties resolve to the first position in row-major window order.
    """
    _check_rank(x, 4, "maxpool2x2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"maxpool2x2: spatial extent {h}x{w} is not even")
    h2, w2 = h // 2, w // 2
    r = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = r.argmax(axis=-1)
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]

    def bw(g, needs):
        gr = np.zeros((n, c, h2, w2, 4), dtype=DTYPE)
        np.put_along_axis(gr, idx[..., None], g[..., None], axis=-1)
        return (gr.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return _record(out, (x,), bw), idx


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, training: bool, eps: float = 1e-5,
              momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization over (N, H, W) for NCHW or (N,) for NC.

    In training mode the running buffers are updated in place with
    ``new = (1 - momentum) * old + momentum * batch`` (unbiased batch variance).
    """
    if x.data.ndim not in (2, 4):
        raise ContractError(f"batchnorm: expected NC or NCHW input, got {x.shape}")
    c = x.shape[1]
    for label, arr in (("gamma", gamma.data), ("beta", beta.data),
                       ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (c,):
            raise ContractError(f"batchnorm: {label} shape {arr.shape} != channels ({c},)")
    if eps <= 0:
        raise ContractError("batchnorm: eps must be positive")
    axes = (0, 2, 3) if x.data.ndim == 4 else (0,)
    bshape = (1, c, 1, 1) if x.data.ndim == 4 else (1, c)
    m = x.size // c
    gd = gamma.data.reshape(bshape)

    if training:
        if m <= 1:
            raise DegenerateStatisticsError("batchnorm: train mode needs more than one value per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv_std = (1.0 / np.sqrt(var + eps)).astype(DTYPE)
        xhat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))
        out = xhat * gd + beta.data.reshape(bshape)

        def bw(g, needs):
            dgamma = (g * xhat).sum(axis=axes) if needs[1] else None
            dbeta = g.sum(axis=axes) if needs[2] else None
            dx = None
            if needs[0]:
                dxhat = g * gd
                dx = (inv_std.reshape(bshape) / m) * (
                    m * dxhat
                    - dxhat.sum(axis=axes).reshape(bshape)
                    - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
            return dx, dgamma, dbeta
    else:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(DTYPE)
        xhat = (x.data - running_mean.reshape(bshape).astype(DTYPE)) * inv_std.reshape(bshape)
        out = xhat * gd + beta.data.reshape(bshape)

        def bw(g, needs):
            dx = g * gd * inv_std.reshape(bshape) if needs[0] else None
            dgamma = (g * xhat).sum(axis=axes) if needs[1] else None
            dbeta = g.sum(axis=axes) if needs[2] else None
            return dx, dgamma, dbeta

    return _record(out, (x, gamma, beta), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    _check_rank(x, 4, "global_avg_pool")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def bw(g, needs):
        return (np.broadcast_to((g / (h * w))[:, :, None, None], (n, c, h, w)).astype(DTYPE),)

    return _record(out, (x,), bw)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along channels; ``a``'s channels come first."""
    if a.data.ndim != b.data.ndim or a.data.ndim < 2:
        raise ContractError(f"concat_channels: rank mismatch {a.shape} vs {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ContractError(f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return _record(out, (a, b), lambda g, n: (g[:, :ca], g[:, ca:]))


def split_channels(x: Tensor, at: int) -> tuple[Tensor, Tensor]:
    """Inverse of :func:`concat_channels` at channel boundary ``at``."""
    if not 0 < at < x.shape[1]:
        raise ContractError(f"split_channels: boundary {at} outside (0, {x.shape[1]})")
    shape = x.shape

    def padded(lo, hi):
        def bw(g, needs):
            full = np.zeros(shape, dtype=DTYPE)
            full[:, lo:hi] = g
            return (full,)
        return bw

    a = _record(np.ascontiguousarray(x.data[:, :at]), (x,), padded(0, at))
    b = _record(np.ascontiguousarray(x.data[:, at:]), (x,), padded(at, shape[1]))
    return a, b


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w.T + b`` with (Cout, Cin) weight."""
    _check_rank(x, 2, "dense")
    _check_rank(w, 2, "dense weight")
    if x.shape[1] != w.shape[1]:
        raise ContractError(f"dense: input features {x.shape[1]} != weight in_features {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ContractError(f"dense: bias shape {b.shape} != out_features ({w.shape[0]},)")
    xd, wd = x.data, w.data
    out = xd @ wd.T + b.data

    def bw(g, needs):
        return (g @ wd if needs[0] else None,
                g.T @ xd if needs[1] else None,
                g.sum(axis=0) if needs[2] else None)

    return _record(out, (x, w, b), bw)


# --------------------------------------------------------------------------
# Losses

CLAMP_EPS = 1e-7


def binary_cross_entropy(yhat: Tensor, target) -> Tensor:
    """Mean BCE of probabilities against a {0,1} target.

    Probabilities are clamped to [eps, 1-eps]; the gradient is evaluated at
    the clamped value rather than zeroed, so saturated pixels still train.
    """
    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=DTYPE)
    if y.shape != yhat.shape:
        raise ContractError(f"binary_cross_entropy: extent mismatch {y.shape} vs {yhat.shape}")
    p = np.clip(yhat.data.astype(np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)
    m = y.size
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean()

    def bw(g, needs):
        return ((g * (p - y) / (p * (1.0 - p)) / m).astype(DTYPE),)

    return _record(np.asarray(loss, dtype=DTYPE), (yhat,), bw)


def categorical_cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean of ``-log p[label]`` over the batch, with the same clamp."""
    _check_rank(probs, 2, "categorical_cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    nb, nc = probs.shape
    if labels.shape != (nb,):
        raise ContractError(f"categorical_cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for batch {nb}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= nc:
        raise ContractError(f"categorical_cross_entropy: label out of range [0, {nc})")
    rows = np.arange(nb)
    picked = np.clip(probs.data[rows, labels].astype(np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -np.log(picked).mean()

    def bw(g, needs):
        gp = np.zeros(probs.shape, dtype=DTYPE)
        gp[rows, labels] = -g / (picked * nb)
        return (gp,)

    return _record(np.asarray(loss, dtype=DTYPE), (probs,), bw)


# --------------------------------------------------------------------------
# Shape inference (no arithmetic)


def conv2d_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def conv2d_transpose_out_hw(h: int, w: int, k: int, stride: int) -> tuple[int, int]:
    return (h - 1) * stride + k, (w - 1) * stride + k
