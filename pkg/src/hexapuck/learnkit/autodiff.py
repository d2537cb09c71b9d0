"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the operations the function approximators need: affine maps,
elementwise nonlinearities, reductions, and a few pointwise combinators. All
computation stays in the array dtype, so float32 training paths and float64
verification paths behave identically apart from precision.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _lift(other, dtype) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=dtype))

    def __add__(self, other):
        other = self._lift(other, self.dtype)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)
        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._backward = lambda g: (-g,)
        return out

    def __sub__(self, other):
        other = self._lift(other, self.dtype)
        out = Tensor(self.data - other.data, _parents=(self, other))

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)
        out._backward = backward
        return out

    def __rsub__(self, other):
        return self._lift(other, self.dtype) - self

    def __mul__(self, other):
        other = self._lift(other, self.dtype)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def backward(g):
            return (_unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape))
        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other, self.dtype)
        out = Tensor(self.data / other.data, _parents=(self, other))

        def backward(g):
            return (_unbroadcast(g / other.data, self.shape),
                    _unbroadcast(-g * self.data / (other.data * other.data), other.shape))
        out._backward = backward
        return out

    def __matmul__(self, other):
        out = Tensor(self.data @ other.data, _parents=(self, other))

        def backward(g):
            return g @ other.data.T, self.data.T @ g
        out._backward = backward
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(self.data * mask, _parents=(self,))
        out._backward = lambda g: (g * mask,)
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, _parents=(self,))
        out._backward = lambda g: (g * (1.0 - t * t),)
        return out

    def exp(self):
        e = np.exp(self.data)
        out = Tensor(e, _parents=(self,))
        out._backward = lambda g: (g * e,)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._backward = lambda g: (g / self.data,)
        return out

    def square(self):
        out = Tensor(self.data * self.data, _parents=(self,))
        out._backward = lambda g: (2.0 * g * self.data,)
        return out

    def clip(self, lo: float, hi: float):
        """Hard clamp; gradient is zero outside the bounds."""
        mask = (self.data >= lo) & (self.data <= hi)
        out = Tensor(np.clip(self.data, lo, hi), _parents=(self,))
        out._backward = lambda g: (g * mask,)
        return out

    def minimum(self, other: "Tensor"):
        """Elementwise min; ties route the gradient to the first argument."""
        take_self = self.data <= other.data
        out = Tensor(np.where(take_self, self.data, other.data), _parents=(self, other))

        def backward(g):
            return (_unbroadcast(g * take_self, self.shape),
                    _unbroadcast(g * ~take_self, other.shape))
        out._backward = backward
        return out

    def sum(self):
        out = Tensor(self.data.sum(), _parents=(self,))
        out._backward = lambda g: (np.broadcast_to(g, self.shape).copy(),)
        return out

    def mean(self):
        n = self.data.size
        out = Tensor(self.data.mean(), _parents=(self,))
        out._backward = lambda g: (np.broadcast_to(g / n, self.shape).copy(),)
        return out

    def sum_axis1(self, keepdims: bool = True):
        out = Tensor(self.data.sum(axis=1, keepdims=keepdims), _parents=(self,))

        def backward(g):
            if not keepdims:
                g = g[:, None]
            return (np.broadcast_to(g, self.shape).copy(),)
        out._backward = backward
        return out

    @staticmethod
    def concat(parts: list["Tensor"], axis: int = 1) -> "Tensor":
        out = Tensor(np.concatenate([p.data for p in parts], axis=axis), _parents=tuple(parts))
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def backward(g):
            return tuple(np.split(g, splits, axis=axis))
        out._backward = backward
        return out

    # -- reverse pass ----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise NumericError("backward() expects a scalar loss")
        if not np.isfinite(self.data):
            raise NumericError(f"non-finite loss: {self.data!r}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pgrad.astype(parent.dtype, copy=True)
                else:
                    parent.grad += pgrad
