"""Named parameters, Adam and the binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic b"UAVNN001"
    uint32    parameter count
    per parameter, in name order:
        uint32          name length in bytes
        bytes           UTF-8 name
        uint32          number of dimensions d
        d x uint32      shape
        prod(shape) x float64 (little-endian), row-major values
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..errors import FormatError, ParameterError, TrainingError

MAGIC = b"UAVNN001"


class ParamStore:
    """Parameters with matching gradients and per-parameter Adam state."""

    def __init__(self) -> None:
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise ParameterError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        self.steps[name] = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __len__(self) -> int:
        return len(self.values)

    def names(self, prefix: str = "") -> list[str]:
        """Sorted names, optionally only those starting with ``prefix``."""
        return sorted(n for n in self.values if n.startswith(prefix))

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        if grad.shape != self.values[name].shape:
            raise ParameterError(f"gradient shape {grad.shape} != {self.values[name].shape} for {name}")
        self.grads[name] += grad

    def zero_grad(self, names: Iterable[str] | None = None) -> None:
        for n in self.names() if names is None else names:
            self.grads[n][...] = 0.0

    def set(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise ParameterError(f"shape {value.shape} != {self.values[name].shape} for {name}")
        self.values[name][...] = value

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: self.values[n].copy() for n in self.names()}


def adam_step(store: ParamStore, lr: float = 4e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, names: Iterable[str] | None = None) -> None:
    """Bias-corrected Adam update of ``names`` (all parameters by default), in place.

    Each parameter keeps its own step count, so branches updated on alternate
    epochs get the correct bias correction. Raises :class:`TrainingError`
    naming the first parameter whose gradient is not finite; no parameter is
    modified in that case.
    """
    names = store.names() if names is None else sorted(names)
    for n in names:
        if not np.all(np.isfinite(store.grads[n])):
            raise TrainingError(f"non-finite gradient for parameter {n!r}")
    for n in names:
        g = store.grads[n]
        store.steps[n] += 1
        t = store.steps[n]
        store.m[n] = beta1 * store.m[n] + (1 - beta1) * g
        store.v[n] = beta2 * store.v[n] + (1 - beta2) * g * g
        m_hat = store.m[n] / (1 - beta1**t)
        v_hat = store.v[n] / (1 - beta2**t)
        store.values[n] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def save_params(store: ParamStore, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<I", len(store))]
    for n in store.names():
        v = store.values[n]
        raw = n.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{v.ndim}I", v.ndim, *v.shape))
        parts.append(np.ascontiguousarray(v, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path: str | Path) -> ParamStore:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    store = ParamStore()
    (count,) = struct.unpack("<I", take(4))
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        store.add(name, np.frombuffer(take(8 * size), dtype="<f8").reshape(shape))
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return store
