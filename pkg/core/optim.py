"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from config import settings
from core.errors import GradientError
from core.params import ParamStore


@dataclass
class AdamState:
    learning_rate: float = settings.LEARNING_RATE
    beta1: float = settings.ADAM_BETA1
    beta2: float = settings.ADAM_BETA2
    epsilon: float = settings.ADAM_EPSILON
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def moments_for(self, name: str, like: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        return self.m[name], self.v[name]


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One in-place Adam update of every tensor in ``params``; grads are cleared."""
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise GradientError(f"adam_step: no gradient for {missing[0]}"
                            + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, tensor in params.items():
        grad = tensor.grad
        m, v = state.moments_for(name, tensor.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(
            tensor.dtype)
        tensor.grad = None
