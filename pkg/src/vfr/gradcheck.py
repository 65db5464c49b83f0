"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T


def _project(out: np.ndarray, r: np.ndarray) -> float:
    return float(np.sum(out.astype(np.float64) * r))


def autodiff_grads(fn: Callable[..., T.Tensor], inputs: Sequence[np.ndarray], r: np.ndarray) -> list[np.ndarray]:
    """Gradients of ``sum(fn(*inputs) * r)`` by the tape."""
    ts = [T.Tensor(a.copy(), requires_grad=True) for a in inputs]
    with T.Tape() as tape:
        out = fn(*ts)
        loss = T.sum_all(T.mul(out, T.Tensor(r.astype(np.float32))))
    tape.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def numeric_grads(fn: Callable[..., T.Tensor], inputs: Sequence[np.ndarray], r: np.ndarray,
                  h: float = 1e-2, wrt: Sequence[int] | None = None) -> list[np.ndarray | None]:
    arrays = [np.array(a, dtype=np.float32) for a in inputs]
    wrt = range(len(arrays)) if wrt is None else wrt
    out: list[np.ndarray | None] = [None] * len(arrays)

    def value():
        return _project(fn(*[T.Tensor(a) for a in arrays]).data, r)

    for k in wrt:
        a = arrays[k]
        g = np.zeros(a.shape, dtype=np.float64)
        flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = value()
            flat[i] = orig - h
            down = value()
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2 * h)
        out[k] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise ``|a - b| / max(|a|, |b|)``; 0 when both vanish."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def check_gradients(fn: Callable[..., T.Tensor], inputs: Sequence[np.ndarray], seed: int = 0,
                    h: float = 1e-2, wrt: Sequence[int] | None = None) -> list[float]:
    """Relative error per checked input between tape and finite differences."""
    probe = fn(*[T.Tensor(np.asarray(a, np.float32)) for a in inputs]).data
    r = np.random.default_rng(seed).normal(size=probe.shape)
    ad = autodiff_grads(fn, [np.asarray(a, np.float32) for a in inputs], r)
    fd = numeric_grads(fn, inputs, r, h, wrt)
    idx = range(len(inputs)) if wrt is None else wrt
    return [relative_error(ad[k], fd[k]) for k in idx]
