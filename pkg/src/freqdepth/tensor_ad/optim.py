from __future__ import annotations

import numpy as np

from .core import ShapeError, Tensor


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              m: dict[str, np.ndarray], v: dict[str, np.ndarray],
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              t: int = 1):
    """One bias-corrected Adam update.  Returns (params, m, v) as new dicts."""
    if t < 1:
        raise ValueError("adam step counter starts at 1")
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam: gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        mi = beta1 * m.get(name, 0.0) + (1.0 - beta1) * g
        vi = beta2 * v.get(name, 0.0) + (1.0 - beta2) * g * g
        mhat = mi / (1.0 - beta1 ** t)
        vhat = vi / (1.0 - beta2 ** t)
        new_p[name] = p - lr * mhat / (np.sqrt(vhat) + eps)
        new_m[name], new_v[name] = mi, vi
    return new_p, new_m, new_v


class Adam:
    """Stateful wrapper over :func:`adam_step` for a dict of leaf tensors."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> dict[str, Tensor]:
        self.t += 1
        data = {k: p.data for k, p in params.items()}
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
        new, self.m, self.v = adam_step(data, grads, self.m, self.v, self.lr,
                                        self.beta1, self.beta2, self.eps, self.t)
        return {k: Tensor(new[k], requires_grad=True, name=k) for k in params}
