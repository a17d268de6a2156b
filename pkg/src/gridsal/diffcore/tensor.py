"""Tensor type and the recording tape for reverse-mode differentiation."""

from __future__ import annotations

import os

import numpy as np

# Per-op NaN/Inf validation. Scanning every activation costs ~20% of a
# training step, so the default is off; the training and saliency loops
# check their scalar losses every step instead. Tests switch it on.
_CHECK_FINITE = os.environ.get("GRIDSAL_CHECK_FINITE", "") == "1"


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def finite_checks_enabled() -> bool:
    return _CHECK_FINITE


class Tensor:
    """Dense float32 array with optional participation in the gradient tape.

    A tensor produced by an op keeps references to its parents and a
    backward closure; `backward()` walks the recorded graph in reverse
    topological order exactly once, accumulating gradients additively at
    every fan-out.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        if _CHECK_FINITE and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in tensor construction")

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward) -> "Tensor":
        if _CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite values produced by a forward op")
        needs = any(p.requires_grad for p in parents)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- backward pass ------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Run reverse-mode accumulation from this tensor.

        `grad` seeds the output gradient; scalars default to 1.0.
        """
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float32)
            if seed.shape != self.data.shape:
                raise ValueError("seed gradient shape mismatch")

        order = self._topo_order()
        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            gout = grads.pop(id(node), None)
            if gout is None:
                continue
            if node.grad is None:
                node.grad = gout.copy()
            else:
                node.grad = node.grad + gout
            if node._backward is None:
                continue
            parent_grads = node._backward(gout)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

    def _topo_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # -- convenience arithmetic ----------------------------------------------

    def __add__(self, other):
        from gridsal.diffcore.ops import add

        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from gridsal.diffcore.ops import mul

        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from gridsal.diffcore.ops import sub

        return sub(self, other)

    def __rsub__(self, other):
        from gridsal.diffcore.ops import sub

        return sub(other, self)

    def __neg__(self):
        from gridsal.diffcore.ops import mul

        return mul(self, -1.0)
