"""Lion optimizer (sign of interpolated momentum) and gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import NumericError, ParameterError, StateError


@dataclass
class OptimizerState:
    """Per-parameter first-moment buffers plus the global step counter."""

    momentum: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def init(cls, params: Dict[str, np.ndarray]) -> "OptimizerState":
        return cls(momentum={k: np.zeros_like(v) for k, v in params.items()}, step_count=0)


def lion_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: OptimizerState, lr: float, wd: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.99) -> OptimizerState:
    """One Lion update, in place on the parameter arrays.

    direction = sign(beta1*m + (1-beta1)*g)
    p <- p - lr*(direction + wd*p)          (decoupled weight decay)
    m <- beta2*m + (1-beta2)*g
    """
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.momentum.get(name)
        if m is None or m.shape != p.shape:
            raise StateError(f"optimizer momentum buffer missing or mismatched for '{name}'")
        direction = np.sign(beta1 * m + (1.0 - beta1) * g)
        p -= (lr * (direction + wd * p)).astype(p.dtype, copy=False)
        m *= beta2
        m += (1.0 - beta2) * g
    state.step_count += 1
    return state


def global_grad_norm(grads: Dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.dot(g.ravel(), g.ravel()))
    return float(np.sqrt(total))


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place if their global L2 norm exceeds max_norm.

    Returns the pre-clip norm. Zero gradients pass through untouched.
    """
    if max_norm <= 0:
        raise ParameterError(f"max_norm must be positive, got {max_norm}")
    norm = global_grad_norm(grads)
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm after backward pass")
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
