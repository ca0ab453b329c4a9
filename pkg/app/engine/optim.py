"""
Adam optimizer.
"""

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from app.engine.tensor import EngineError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    grads: Mapping[str, np.ndarray] | None = None,
) -> None:
    """
    One bias-corrected Adam update, in place.

    Gradients default to each parameter's ``.grad``; a parameter without a
    gradient is treated as having a zero gradient.
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, param in params.items():
        grad = grads[name] if grads is not None else param.grad
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.data.shape:
            raise EngineError(f"gradient for {name} has shape {grad.shape}, expected {param.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad**2
        state.m[name], state.v[name] = m, v
        param.data -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
