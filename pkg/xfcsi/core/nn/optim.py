from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Parameter


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: Iterable[Parameter], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Dict[str, AdamState]:
    return {
        p.name: AdamState(np.zeros_like(p.data), np.zeros_like(p.data), 0, beta1, beta2, eps)
        for p in params
    }


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def adam_update(params: Sequence[Parameter], states: Dict[str, AdamState], lr: float) -> None:
    """One bias-corrected Adam step; the only place parameters are mutated."""
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}", field="train.lr")
    for p in params:
        st = states[p.name]
        if st.m.shape != p.data.shape or p.grad is None or p.grad.shape != p.data.shape:
            raise ShapeError(f"optimizer state for {p.name} does not match the parameter")
        g = p.grad
        st.step_count += 1
        st.m = st.beta1 * st.m + (1.0 - st.beta1) * g
        st.v = st.beta2 * st.v + (1.0 - st.beta2) * g * g
        m_hat = st.m / (1.0 - st.beta1 ** st.step_count)
        v_hat = st.v / (1.0 - st.beta2 ** st.step_count)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + st.eps)).astype(p.data.dtype)
