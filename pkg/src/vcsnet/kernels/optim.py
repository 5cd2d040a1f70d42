"""Adam with bias correction, plus global-norm gradient clipping."""
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DimensionError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    k: int = 0


def adam_step(params, grads, state, lr):
    """Update ``params`` (ndarrays) in place and advance ``state`` by one step."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"param {p.shape} / grad {g.shape} / state {m.shape} mismatch")
    state.k += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.k
    c2 = 1.0 - b2 ** state.k
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if lr != 0:
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


class Adam:
    """Adam over a fixed list of Tensor parameters."""

    def __init__(self, params, lr=5e-5, clip_norm=None):
        self.params = list(params)
        self.lr = lr
        self.clip_norm = clip_norm
        self.state = AdamState()

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        if self.clip_norm is not None:
            grads = clip_grad_norm(grads, self.clip_norm)
        adam_step([p.data for p in self.params], grads, self.state, self.lr)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_grad_norm(grads, max_norm):
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / (norm + 1e-12)
        return [g * s for g in grads]
    return grads
