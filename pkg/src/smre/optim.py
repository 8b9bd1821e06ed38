"""Adam with bias correction, plus global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params):
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()}, 0)


def collect_grads(params):
    """Parameter gradients, with zeros for parameters the loss never touched."""
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for k, p in params.items()}


def clip_global_norm(grads, max_norm):
    """Rescale all gradients together so their joint L2 norm is ≤ max_norm."""
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if max_norm is None or max_norm <= 0 or total <= max_norm:
        return grads, total
    scale = max_norm / (total + 1e-6)
    return {k: g * g.dtype.type(scale) for k, g in grads.items()}, total


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    if lr < 0:
        raise ContractError(f"learning rate must be non-negative, got {lr}")
    for k, p in params.items():
        if k not in state.m or state.m[k].shape != p.shape or state.v[k].shape != p.shape:
            raise ContractError(f"optimizer state for {k!r} does not match parameter shape {p.shape}")
        if grads[k].shape != p.shape:
            raise ContractError(f"gradient for {k!r} has shape {grads[k].shape}, expected {p.shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v = state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        if lr == 0:
            continue
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)
    return params, state
