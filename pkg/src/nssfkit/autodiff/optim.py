"""Adam optimiser and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update on dicts of numpy arrays.

    Returns new parameter arrays and the advanced state; inputs are not
    modified. Parameters without a gradient entry are left untouched.
    """
    t = state.step + 1
    new_params, m_all, v_all = {}, dict(state.m), dict(state.v)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = beta1 * m_all.get(name, np.zeros_like(p)) + (1.0 - beta1) * g
        v = beta2 * v_all.get(name, np.zeros_like(p)) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_all[name], v_all[name] = m, v
    return new_params, AdamState(t, m_all, v_all)


def clip_grad_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients jointly so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
    if max_norm is None or total <= max_norm or total == 0.0:
        return grads, total
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}, total


class Adam:
    """Stateful wrapper updating ``Tensor`` parameters in place."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, clip_norm: float | None = None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.state = AdamState()
        self.last_grad_norm = 0.0

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        if self.clip_norm is not None:
            grads, self.last_grad_norm = clip_grad_norm(grads, self.clip_norm)
        arrays = {k: p.data for k, p in self.params.items()}
        updated, self.state = adam_step(arrays, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        for k, p in self.params.items():
            p.data = updated[k]
