"""RMSProp and SGD-with-momentum update rules.

Both exist as pure single-array step functions (easy to test against the
scalar recurrences) plus a thin stateful wrapper over a named parameter
dict for the training loop.
"""

from __future__ import annotations

import numpy as np

from gridsal.diffcore.tensor import Tensor


def rmsprop_step(param: np.ndarray, grad: np.ndarray, sq_avg: np.ndarray,
                 lr: float, decay: float = 0.9, eps: float = 1e-8):
    """One RMSProp update. Returns (new_param, new_sq_avg).

    sq_avg <- decay * sq_avg + (1 - decay) * grad^2
    param  <- param - lr * grad / (sqrt(sq_avg) + eps)
    """
    if lr <= 0:
        raise ValueError("rmsprop lr must be positive")
    sq = decay * sq_avg + (1.0 - decay) * grad * grad
    new = param - lr * grad / (np.sqrt(sq) + eps)
    return new.astype(np.float32, copy=False), sq.astype(np.float32, copy=False)


def sgd_momentum_step(var: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
                      lr: float, momentum: float):
    """One heavy-ball step. Returns (new_var, new_velocity).

    velocity <- momentum * velocity + grad
    var      <- var - lr * velocity
    """
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must be in [0, 1)")
    v = momentum * velocity + grad
    new = var - lr * v
    return new.astype(np.float32, copy=False), v.astype(np.float32, copy=False)


class RMSProp:
    """RMSProp over a {name: Tensor} parameter dict, in fixed name order."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 decay: float = 0.9, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.sq_avg = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        for name in self.params:
            p = self.params[name]
            if p.grad is None:
                continue
            p.data, self.sq_avg[name] = rmsprop_step(
                p.data, p.grad, self.sq_avg[name], self.lr, self.decay, self.eps
            )

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
