"""Adam with bias correction over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import DTYPE, Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, names: list[str]):
        self.names = names
        super().__init__(f"non-finite gradient in {', '.join(names)}; step rejected")


@dataclass
class ParamState:
    value: Tensor
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_tensor(cls, value: Tensor) -> "ParamState":
        return cls(value, np.zeros_like(value.data), np.zeros_like(value.data))


@dataclass
class Adam:
    params: Mapping[str, Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    state: dict[str, ParamState] = field(default_factory=dict)
    scalars_updated: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        for name, p in self.params.items():
            self.state.setdefault(name, ParamState.for_tensor(p))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, grads: Mapping[str, np.ndarray] | None = None) -> None:
        """Apply one update. Gradients default to each parameter's ``.grad``.

        If any gradient is non-finite nothing is updated and
        :class:`NonFiniteGradientError` names the offending parameters.
        """
        if grads is None:
            grads = {n: p.grad for n, p in self.params.items()}
        bad = [n for n, g in grads.items() if g is not None and not np.all(np.isfinite(g))]
        if bad:
            raise NonFiniteGradientError(bad)
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            st = self.state[name]
            if g is None:
                g = np.zeros_like(st.value.data)
            if g.shape != st.value.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter {name} shape {st.value.shape}")
            st.t += 1
            st.m *= b1
            st.m += (1.0 - b1) * g
            st.v *= b2
            st.v += (1.0 - b2) * (g * g)
            m_hat = st.m / (1.0 - b1 ** st.t)
            v_hat = st.v / (1.0 - b2 ** st.t)
            st.value.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(DTYPE)
            self.scalars_updated += g.size

    @property
    def t(self) -> int:
        return max((s.t for s in self.state.values()), default=0)


def adam_step(states: Mapping[str, ParamState], grads: Mapping[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Functional form: update ``states`` in place from ``grads``."""
    opt = Adam({n: s.value for n, s in states.items()}, lr, beta1, beta2, eps, state=dict(states))
    opt.step(grads)
