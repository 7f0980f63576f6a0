"""Dense layers with hand-written backward passes.

Layers cache what they need during ``forward`` and consume it in
``backward``; gradients accumulate into ``grads`` keyed like ``params``.
All arithmetic is float64.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from ..errors import BatchTooSmallError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
DEFAULT_DROPOUT = 0.1


def _as_2d(x, name="input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (batch x features), got shape {x.shape}")
    return x


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            g = self.grads.get(k)
            if g is None or g.shape != v.shape:
                self.grads[k] = np.zeros_like(v)
            else:
                g.fill(0.0)

    __call__ = forward


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``x @ weight + bias`` with shape checks."""
    x = _as_2d(x)
    if weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"input width {x.shape[1]} does not match weight shape {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"bias shape {bias.shape} does not match weight shape {weight.shape}")
    return x @ weight + bias


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: Optional[np.random.Generator] = None,
                 init: str = "he"):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        if rng is None:
            w = np.zeros((in_dim, out_dim))
        elif init == "he":
            w = he_uniform(rng, in_dim, out_dim)
        elif init == "xavier":
            w = xavier_uniform(rng, in_dim, out_dim)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.params = {"weight": w, "bias": np.zeros(out_dim)}
        self.zero_grad()
        self._x = None

    def forward(self, x, train=False):
        x = _as_2d(x)
        y = linear(x, self.params["weight"], self.params["bias"])
        self._x = x
        return y

    def backward(self, grad):
        grad = _as_2d(grad, "grad")
        if grad.shape != (self._x.shape[0], self.out_dim):
            raise ShapeError(f"grad shape {grad.shape} does not match output shape")
        self.grads["weight"] += self._x.T @ grad
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"].T


class BatchNorm(Layer):
    """Batch normalization over the batch axis.

    Train mode normalizes with the batch mean and biased variance and
    updates the running statistics (running variance uses the unbiased
    batch estimate); eval mode normalizes with the running statistics.
    """

    def __init__(self, dim: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        super().__init__()
        self.dim, self.eps, self.momentum = dim, eps, momentum
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.buffers = {"running_mean": np.zeros(dim), "running_var": np.ones(dim)}
        self.zero_grad()
        self._cache = None

    def forward(self, x, train=False):
        x = _as_2d(x)
        if x.shape[1] != self.dim:
            raise ShapeError(f"batchnorm expects width {self.dim}, got {x.shape[1]}")
        if train:
            n = x.shape[0]
            if n < 2:
                raise BatchTooSmallError("batchnorm in train mode needs a batch of at least 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm *= 1 - m
            rm += m * mean
            rv *= 1 - m
            rv += m * var * n / (n - 1)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad):
        xhat, inv_std, train = self._cache
        grad = _as_2d(grad, "grad")
        self.grads["gamma"] += (grad * xhat).sum(axis=0)
        self.grads["beta"] += grad.sum(axis=0)
        dxhat = grad * self.params["gamma"]
        if not train:
            return dxhat * inv_std
        n = grad.shape[0]
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class ReLU(Layer):
    def forward(self, x, train=False):
        x = _as_2d(x)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)``; identity in eval mode."""

    def __init__(self, p: float = DEFAULT_DROPOUT, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if not (0.0 <= p < 1.0):
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self._scale = None

    def forward(self, x, train=False):
        x = _as_2d(x)
        if not train or self.p == 0.0:
            self._scale = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout in train mode needs a random generator")
        keep = self.rng.random(x.shape) >= self.p
        self._scale = keep / (1.0 - self.p)
        return x * self._scale

    def backward(self, grad):
        return grad if self._scale is None else grad * self._scale


class Sequential(Layer):
    def __init__(self, layers: Iterable[tuple[str, Layer]]):
        super().__init__()
        self.layers = dict(layers)

    def forward(self, x, train=False):
        for layer in self.layers.values():
            x = layer.forward(x, train)
        return x

    def backward(self, grad):
        for layer in reversed(list(self.layers.values())):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for layer in self.layers.values():
            layer.zero_grad()

    def named(self, attr: str) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers.items():
            src = layer.named(attr) if isinstance(layer, Sequential) else getattr(layer, attr)
            for k, v in src.items():
                out[f"{name}.{k}"] = v
        return out


def encoder_block(in_dim: int, out_dim: int, init_rng: np.random.Generator, dropout: float,
                  dropout_rng: Optional[np.random.Generator] = None) -> Sequential:
    """linear -> batchnorm -> ReLU -> dropout."""
    return Sequential([
        ("linear", Linear(in_dim, out_dim, init_rng, init="he")),
        ("bn", BatchNorm(out_dim)),
        ("relu", ReLU()),
        ("dropout", Dropout(dropout, dropout_rng)),
    ])


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_backward(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax given its output."""
    return probs * (grad - (grad * probs).sum(axis=-1, keepdims=True))
