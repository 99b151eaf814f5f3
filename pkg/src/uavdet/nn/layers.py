"""Layer objects over a shared :class:`ParamStore` and a fixed-order container.

A layer owns parameter *names*, never arrays: ``forward(store, x)`` reads the
current values and ``backward(store, dy, cache)`` adds parameter gradients to
``store.grads`` and returns the input gradient. Shapes in ``out_shape`` and
``Sequential.trace`` exclude the batch axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from . import functional as F
from .params import ParamStore


class Layer:
    label = "layer"

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        pass

    def out_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, store: ParamStore, x: np.ndarray):
        raise NotImplementedError

    def backward(self, store: ParamStore, dy: np.ndarray, cache) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, name: str, c_in: int, c_out: int, kernel: int = 3, stride: int = 2,
                 padding: int = 0) -> None:
        self.name, self.c_in, self.c_out = name, c_in, c_out
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.label = name

    def init(self, store, rng):
        fan_in = self.c_in * self.kernel**2
        store.add(f"{self.name}.w", F.kaiming_uniform(rng, (self.c_out, self.c_in, self.kernel, self.kernel), fan_in))
        store.add(f"{self.name}.b", np.zeros(self.c_out))

    def out_shape(self, shape):
        c, h, w = shape
        if c != self.c_in:
            raise ParameterError(f"{self.name}: expected {self.c_in} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        return (self.c_out, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)

    def forward(self, store, x):
        return F.conv2d(x, store[f"{self.name}.w"], store[f"{self.name}.b"], self.stride, self.padding)

    def backward(self, store, dy, cache):
        dx, dw, db = F.conv2d_backward(dy, cache)
        store.accumulate(f"{self.name}.w", dw)
        store.accumulate(f"{self.name}.b", db)
        return dx


class AdaptiveAvgPool(Layer):
    def __init__(self, out_h: int, out_w: int, label: str = "pool") -> None:
        self.out_h, self.out_w, self.label = out_h, out_w, label

    def out_shape(self, shape):
        return (shape[0], self.out_h, self.out_w)

    def forward(self, store, x):
        return F.adaptive_avg_pool(x, self.out_h, self.out_w)

    def backward(self, store, dy, cache):
        return F.adaptive_avg_pool_backward(dy, cache)


class Dense(Layer):
    """Affine map over the last axis (leading axes are treated as batch)."""

    def __init__(self, name: str, n_in: int, n_out: int) -> None:
        self.name, self.n_in, self.n_out, self.label = name, n_in, n_out, name

    def init(self, store, rng):
        store.add(f"{self.name}.w", F.kaiming_uniform(rng, (self.n_in, self.n_out), self.n_in))
        store.add(f"{self.name}.b", np.zeros(self.n_out))

    def out_shape(self, shape):
        if shape[-1] != self.n_in:
            raise ParameterError(f"{self.name}: expected {self.n_in} inputs, got {shape[-1]}")
        return shape[:-1] + (self.n_out,)

    def forward(self, store, x):
        return F.fully_connected(x, store[f"{self.name}.w"], store[f"{self.name}.b"])

    def backward(self, store, dy, cache):
        dx, dw, db = F.fully_connected_backward(dy, cache)
        store.accumulate(f"{self.name}.w", dw)
        store.accumulate(f"{self.name}.b", db)
        return dx


class ReLU(Layer):
    label = "relu"

    def forward(self, store, x):
        return F.relu(x)

    def backward(self, store, dy, cache):
        return F.relu_backward(dy, cache)


class Reshape(Layer):
    def __init__(self, shape: tuple[int, ...], label: str = "reshape") -> None:
        self.shape, self.label = tuple(shape), label

    def out_shape(self, shape):
        if int(np.prod(shape)) != int(np.prod(self.shape)):
            raise ParameterError(f"cannot reshape {shape} to {self.shape}")
        return self.shape

    def forward(self, store, x):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ParameterError(f"cannot reshape {x.shape[1:]} to {self.shape}")
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, store, dy, cache):
        return dy.reshape(cache)


class L2Normalize(Layer):
    """Unit-norm rows; rows with norm below ``eps`` are floored and flagged in the cache."""

    label = "l2norm"

    def __init__(self, eps: float = 1e-12) -> None:
        self.eps = eps

    def forward(self, store, x):
        return F.l2_normalize(x, self.eps)

    def backward(self, store, dy, cache):
        return F.l2_normalize_backward(dy, cache)


class BiGRU(Layer):
    """Bidirectional GRU over ``[B, T, in]`` returning ``[B, 2 * hidden]``."""

    def __init__(self, name: str, n_in: int, hidden: int = 100) -> None:
        self.name, self.n_in, self.hidden, self.label = name, n_in, hidden, name

    def _keys(self, direction: str) -> dict[str, str]:
        return {k: f"{self.name}.{direction}.{k}" for k in F.GRU_KEYS}

    def init(self, store, rng):
        h = self.hidden
        for direction in ("fwd", "bwd"):
            for k, full in self._keys(direction).items():
                if k.startswith("W"):
                    store.add(full, F.kaiming_uniform(rng, (self.n_in, h), self.n_in))
                elif k.startswith("U"):
                    store.add(full, F.kaiming_uniform(rng, (h, h), h))
                else:
                    store.add(full, np.zeros(h))

    def out_shape(self, shape):
        if shape[-1] != self.n_in:
            raise ParameterError(f"{self.name}: expected {self.n_in} inputs, got {shape[-1]}")
        return (2 * self.hidden,)

    def _params(self, store, direction):
        return {k: store[full] for k, full in self._keys(direction).items()}

    def forward(self, store, x):
        return F.bigru_forward(x, self._params(store, "fwd"), self._params(store, "bwd"))

    def backward(self, store, dy, cache):
        dx, gf, gb = F.bigru_backward(dy, cache, self._params(store, "fwd"), self._params(store, "bwd"))
        for direction, g in (("fwd", gf), ("bwd", gb)):
            for k, full in self._keys(direction).items():
                store.accumulate(full, g[k])
        return dx


class Sequential:
    """Layers applied in order; caches are kept for one backward pass."""

    def __init__(self, layers: list[Layer], in_shape: tuple[int, ...]) -> None:
        self.layers = list(layers)
        self.in_shape = tuple(in_shape)
        self.trace()  # validates the chain

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init(store, rng)

    def param_names(self) -> list[str]:
        names = []
        for layer in self.layers:
            if hasattr(layer, "name"):
                names.append(layer.name)
        return names

    def trace(self) -> list[tuple[str, tuple[int, ...]]]:
        """``(layer label, output shape)`` for every layer, batch axis excluded."""
        shape = self.in_shape
        out = []
        for layer in self.layers:
            shape = layer.out_shape(shape)
            out.append((layer.label, shape))
        return out

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.trace()[-1][1]

    def forward(self, store: ParamStore, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.in_shape:
            raise ParameterError(f"expected input shape {self.in_shape}, got {x.shape[1:]}")
        caches = []
        for layer in self.layers:
            x, c = layer.forward(store, x)
            caches.append(c)
        return x, caches

    def backward(self, store: ParamStore, dy: np.ndarray, caches) -> np.ndarray:
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(store, dy, c)
        return dy
