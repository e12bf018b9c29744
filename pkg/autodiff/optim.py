from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from autodiff.tensor import Tensor
from utils.errors import ContractViolation


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState,
              grads: Optional[Sequence[np.ndarray]] = None) -> Sequence[Tensor]:
    """Bias-corrected Adam update applied in place to every parameter"""
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params):
        raise ContractViolation(f"{len(params)} parameters but {len(grads)} gradients")
    for i, g in enumerate(grads):
        if g is None:
            raise ContractViolation(f"parameter {i} has no gradient")

    if not state.first_moments:
        state.first_moments = [np.zeros_like(p.data) for p in params]
        state.second_moments = [np.zeros_like(p.data) for p in params]
    for p, m in zip(params, state.first_moments):
        if p.shape != m.shape:
            raise ContractViolation(f"moment buffer shape {m.shape} != parameter shape {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params
