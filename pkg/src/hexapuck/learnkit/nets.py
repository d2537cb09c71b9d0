"""Fully connected networks, Adam, and bit-exact checkpoints."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, NumericError
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class Linear:
    """Affine layer ``x @ W + b`` with He-scaled initialization."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32, weight_scale: float | None = None):
        scale = np.sqrt(2.0 / n_in) if weight_scale is None else weight_scale
        w = rng.normal(0.0, 1.0, (n_in, n_out)) * scale
        self.W = Tensor(w.astype(dtype), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b

    def apply_raw(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.data + self.b.data


class DenseNet:
    """Rectifier MLP with an optional squashing output activation.

    ``__call__`` builds the autodiff graph; ``forward`` is the tape-free path
    used by the planner's batched rollouts. Both apply the layers in the same
    order on the same arrays, so they agree bitwise.
    """

    def __init__(self, widths: tuple[int, ...], rng: np.random.Generator,
                 output_activation: str = "identity", dtype=np.float32):
        if len(widths) < 2:
            raise InvalidInputError("need at least an input and an output width")
        if output_activation not in ("identity", "tanh"):
            raise InvalidInputError(f"unknown output activation {output_activation!r}")
        self.widths = tuple(int(w) for w in widths)
        self.output_activation = output_activation
        self.dtype = dtype
        self.layers = [Linear(widths[i], widths[i + 1], rng, dtype=dtype)
                       for i in range(len(widths) - 1)]

    def __call__(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if h.data.ndim != 2 or h.data.shape[1] != self.widths[0]:
            raise InvalidInputError(
                f"expected input of width {self.widths[0]}, got shape {h.data.shape}")
        for layer in self.layers[:-1]:
            h = layer(h).relu()
        h = self.layers[-1](h)
        if self.output_activation == "tanh":
            h = h.tanh()
        return h

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        if h.ndim != 2 or h.shape[1] != self.widths[0]:
            raise InvalidInputError(
                f"expected input of width {self.widths[0]}, got shape {h.shape}")
        for layer in self.layers[:-1]:
            h = layer.apply_raw(h)
            np.maximum(h, 0.0, out=h)
        h = self.layers[-1].apply_raw(h)
        if self.output_activation == "tanh":
            h = np.tanh(h)
        return h

    def parameters(self) -> list[Tensor]:
        params = []
        for layer in self.layers:
            params.extend((layer.W, layer.b))
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


def gradients(net: DenseNet, loss_fn, batch) -> list[np.ndarray]:
    """Reverse-mode parameter gradients of ``loss_fn(net, batch)``."""
    net.zero_grad()
    loss = loss_fn(net, batch)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise InvalidInputError("loss_fn must return a scalar Tensor")
    if not np.isfinite(loss.data):
        raise NumericError(f"non-finite loss {loss.data!r} "
                           f"(net widths {net.widths}, batch {np.shape(batch)})")
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in net.parameters()]


def adam_step(value, grad, m, v, t, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected moment update; returns (value, m, v) arrays."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Adam over a fixed parameter list, state kept per parameter."""

    def __init__(self, params: list[Tensor], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self.m[i], self.v[i] = adam_step(
                p.data, p.grad, self.m[i], self.v[i], self.t,
                self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def save_checkpoint(net: DenseNet, path) -> None:
    """Flat, versioned dump: layer widths plus row-major parameter arrays."""
    arrays = {
        "version": np.array(CHECKPOINT_VERSION),
        "widths": np.array(net.widths),
        "output_activation": np.array(net.output_activation),
    }
    for i, layer in enumerate(net.layers):
        arrays[f"W{i}"] = layer.W.data
        arrays[f"b{i}"] = layer.b.data
    np.savez(path, **arrays)


def load_checkpoint(path) -> DenseNet:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {data['version']}")
        widths = tuple(int(w) for w in data["widths"])
        net = DenseNet(widths, rng=np.random.default_rng(0),
                       output_activation=str(data["output_activation"]),
                       dtype=data["W0"].dtype.type)
        for i, layer in enumerate(net.layers):
            layer.W.data = data[f"W{i}"].copy()
            layer.b.data = data[f"b{i}"].copy()
    return net
