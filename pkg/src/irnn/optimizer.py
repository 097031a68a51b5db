"""ADAM, with one independent state per parameter block."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numeric import ShapeError


@dataclass
class AdamState:
    shape: tuple
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.m is None:
            self.m = np.zeros(self.shape)
        if self.v is None:
            self.v = np.zeros(self.shape)


def adam_step(state: AdamState, param: np.ndarray, grad: np.ndarray) -> None:
    """Update ``param`` in place and advance ``state``."""
    if param.shape != state.shape or grad.shape != state.shape:
        raise ShapeError(f"ADAM state shape {state.shape} vs param {param.shape} / grad {grad.shape}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_states(params, lr: float = 0.01) -> dict[str, AdamState]:
    return {name: AdamState(block.shape, lr=lr) for name, block in params.blocks().items()}


def apply_adam(states: dict[str, AdamState], params, grads) -> None:
    blocks = params.blocks()
    for name, state in states.items():
        adam_step(state, blocks[name], grads[name])
