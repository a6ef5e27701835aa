"""
Adam optimizer over named parameter tensors
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from app.autodiff.tensor import Tensor
from app.core.errors import ContractViolation


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    # first and second moment estimates, keyed like the parameters
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Dict[str, Tensor],
    grads: Dict[str, Tensor],
) -> Tuple[Dict[str, Tensor], AdamState]:
    """Apply one bias-corrected Adam update in place; returns the same objects"""
    for name, p in params.items():
        if name not in grads:
            raise ContractViolation(f"No gradient supplied for parameter '{name}'")
        if grads[name].shape != p.shape:
            raise ContractViolation(
                f"Gradient shape {grads[name].shape} does not match parameter '{name}' {p.shape}"
            )

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = state.lr / bc1

    for name, p in params.items():
        g = grads[name].data
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]

        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        denom = np.sqrt(v / bc2) + state.epsilon
        p.data -= (step_size * m / denom).astype(p.data.dtype)

    return params, state
