"""Adam with bias correction, and global-norm gradient clipping."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update of ``params`` (arrays) from ``grads``; returns ``state``."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params) or len(grads) != len(params):
        raise ContractError("optimizer state does not match the parameter list")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    def __init__(self, tensors, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState()

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def step(self):
        grads = [np.zeros_like(t.data) if t.grad is None else t.grad for t in self.tensors]
        adam_step([t.data for t in self.tensors], grads, self.state, self.lr,
                  self.beta1, self.beta2, self.eps)


def clip_grad_norm(tensors, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    grads = [t.grad for t in tensors if t.grad is not None]
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-6)
        for g in grads:
            g *= g.dtype.type(factor)
    return norm
