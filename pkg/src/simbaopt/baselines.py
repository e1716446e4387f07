"""Reference optimizers: SGD with heavy-ball momentum and bias-corrected Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidInputError

__all__ = [
    "AdamState",
    "MomentumState",
    "adam_step",
    "sgd_momentum_step",
    "Adam",
    "SGDMomentum",
]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(np.zeros_like(x), np.zeros_like(x))


@dataclass
class MomentumState:
    velocity: np.ndarray

    @classmethod
    def zeros_like(cls, x):
        return cls(np.zeros_like(np.asarray(x, dtype=float)))


def _check_grad(x, grad):
    grad = np.asarray(grad, dtype=float)
    if grad.shape != np.shape(x):
        raise InvalidInputError(f"gradient shape {grad.shape} != block shape {np.shape(x)}")
    if not np.all(np.isfinite(grad)):
        raise InvalidInputError("gradient contains non-finite entries")
    return grad


def adam_step(x, state: AdamState, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    grad = _check_grad(x, grad)
    k = state.step_count + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**k)
    v_hat = v / (1 - beta2**k)
    x_new = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x_new, AdamState(m, v, k)


def sgd_momentum_step(x, state: MomentumState, grad, lr, momentum=0.9):
    grad = _check_grad(x, grad)
    v = momentum * state.velocity + grad
    return x - lr * v, MomentumState(v)


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)
    name: str = "adam"

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        out = {}
        for k, x in params.items():
            st = self.states.get(k) or AdamState.zeros_like(x)
            out[k], self.states[k] = adam_step(x, st, grads[k], lr, self.beta1, self.beta2, self.eps)
        return out, []


@dataclass
class SGDMomentum:
    lr: float = 1e-2
    momentum: float = 0.9
    states: dict = field(default_factory=dict)
    name: str = "sgd"

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        out = {}
        for k, x in params.items():
            st = self.states.get(k) or MomentumState.zeros_like(x)
            out[k], self.states[k] = sgd_momentum_step(x, st, grads[k], lr, self.momentum)
        return out, []
