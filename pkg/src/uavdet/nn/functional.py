"""Stateless layer primitives with hand-written backward passes.

Every forward returns ``(output, cache)``; the matching backward takes the
upstream gradient and the cache. Arrays are float64 with the batch on axis 0.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ParameterError

Tensor = np.ndarray


def tensor(x, shape: tuple[int, ...] | None = None) -> Tensor:
    """float64 copy of ``x``, checked finite and (optionally) of ``shape``."""
    a = np.array(x, dtype=np.float64)
    if shape is not None and a.shape != tuple(shape):
        raise ParameterError(f"expected shape {tuple(shape)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("tensor contains non-finite values")
    return a


# --------------------------------------------------------------------------
# convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 2, padding: int = 0):
    """Valid cross-correlation of ``x [B, C, H, W]`` with ``w [F, C, kh, kw]``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ParameterError(f"conv2d shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    if stride < 1 or padding < 0:
        raise ParameterError("stride must be >= 1 and padding >= 0")
    kh, kw = w.shape[2:]
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ParameterError(f"input {x.shape[2:]} smaller than kernel {(kh, kw)}")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    y = np.einsum("bchwij,fcij->bfhw", win, w, optimize=True) + b[None, :, None, None]
    return y, (x.shape, win, w, stride, padding)


def conv2d_backward(dy: Tensor, cache):
    xshape, win, w, stride, padding = cache
    _, _, ho, wo = dy.shape
    kh, kw = w.shape[2:]
    dw = np.einsum("bchwij,bfhw->fcij", win, dy, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    dx = np.zeros(xshape)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.einsum(
                "bfhw,fc->bchw", dy, w[:, :, i, j], optimize=True)
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx, dw, db


# --------------------------------------------------------------------------
# pooling


def pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Averaging matrix ``[n_out, n_in]``; cell ``i`` spans ``[floor(i n/m), ceil((i+1) n/m))``."""
    if n_in < 1 or n_out < 1:
        raise ParameterError("pool dimensions must be positive")
    if n_out > n_in:
        raise ParameterError(f"cannot pool {n_in} into {n_out} cells")
    p = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        p[i, lo:hi] = 1.0 / (hi - lo)
    return p


def adaptive_avg_pool(x: Tensor, out_h: int, out_w: int):
    """Average ``x [B, C, H, W]`` over an ``out_h x out_w`` grid of near-equal cells.

    Cell boundaries follow the floor/ceil rule of :func:`pool_matrix`, so
    neighbouring cells may share a row or column when the sizes do not divide.
    """
    if x.ndim != 4:
        raise ParameterError(f"expected [B, C, H, W], got {x.shape}")
    ph, pw = pool_matrix(x.shape[2], out_h), pool_matrix(x.shape[3], out_w)
    return np.einsum("oh,bchw,pw->bcop", ph, x, pw, optimize=True), (ph, pw)


def adaptive_avg_pool_backward(dy: Tensor, cache) -> Tensor:
    ph, pw = cache
    return np.einsum("oh,bcop,pw->bchw", ph, dy, pw, optimize=True)


# --------------------------------------------------------------------------
# dense, activations


def fully_connected(x: Tensor, w: Tensor, b: Tensor):
    """``x @ w + b`` over the last axis of ``x``; ``w`` is ``[in, out]``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ParameterError(f"fully_connected shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w + b, (x, w)


def fully_connected_backward(dy: Tensor, cache):
    x, w = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, x2.T @ dy2, dy2.sum(axis=0)


def relu(x: Tensor):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy: Tensor, mask) -> Tensor:
    return dy * mask


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(x: Tensor, axis: int = -1):
    """Exponential normalisation with max subtraction."""
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)
    return p, (p, axis)


def softmax_backward(dp: Tensor, cache) -> Tensor:
    p, axis = cache
    return p * (dp - np.sum(dp * p, axis=axis, keepdims=True))


def l2_normalize(x: Tensor, eps: float = 1e-12):
    """Rows of ``x`` scaled to unit norm; norms below ``eps`` are floored to ``eps``.

    The cache carries a boolean ``floored`` mask marking the rows that hit the floor.
    """
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    floored = norm < eps
    denom = np.where(floored, eps, norm)
    y = x / denom
    return y, (y, denom, floored)


def l2_normalize_backward(dy: Tensor, cache) -> Tensor:
    y, denom, floored = cache
    radial = np.where(floored, 0.0, np.sum(y * dy, axis=-1, keepdims=True))
    return (dy - y * radial) / denom


# --------------------------------------------------------------------------
# gated recurrent unit

GRU_KEYS = ("Wz", "Wr", "Wn", "Uz", "Ur", "Un", "bz", "br", "bn")


def gru_cell(x: Tensor, h: Tensor, p: dict[str, Tensor]):
    """One step: ``z, r`` sigmoid gates, ``n = tanh(x Wn + (r*h) Un + bn)``, ``h' = (1-z) h + z n``."""
    z = sigmoid(x @ p["Wz"] + h @ p["Uz"] + p["bz"])
    r = sigmoid(x @ p["Wr"] + h @ p["Ur"] + p["br"])
    n = np.tanh(x @ p["Wn"] + (r * h) @ p["Un"] + p["bn"])
    h_new = (1.0 - z) * h + z * n
    return h_new, (x, h, z, r, n)


def gru_forward(x: Tensor, p: dict[str, Tensor]):
    """Run a GRU over ``x [B, T, in]`` from a zero state; returns the last state ``[B, H]``."""
    if x.ndim != 3 or x.shape[1] == 0:
        raise ParameterError(f"GRU needs a non-empty [B, T, in] sequence, got {x.shape}")
    if p["Wz"].shape[0] != x.shape[2]:
        raise ParameterError(f"GRU input size {p['Wz'].shape[0]} != {x.shape[2]}")
    h = np.zeros((x.shape[0], p["Uz"].shape[0]))
    steps = []
    for t in range(x.shape[1]):
        h, c = gru_cell(x[:, t], h, p)
        steps.append(c)
    return h, steps


def gru_backward(dh: Tensor, steps, p: dict[str, Tensor]):
    """Backpropagate through time; returns ``(dx [B, T, in], grads by key)``."""
    g = {k: np.zeros_like(p[k]) for k in GRU_KEYS}
    dx = np.zeros((dh.shape[0], len(steps), p["Wz"].shape[0]))
    for t in range(len(steps) - 1, -1, -1):
        x, h, z, r, n = steps[t]
        dz = dh * (n - h)
        dn = dh * z
        dh_prev = dh * (1.0 - z)
        dan = dn * (1.0 - n * n)
        g["Wn"] += x.T @ dan
        g["bn"] += dan.sum(axis=0)
        g["Un"] += (r * h).T @ dan
        drh = dan @ p["Un"].T
        dr = drh * h
        dh_prev += drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        g["Wz"] += x.T @ daz
        g["Uz"] += h.T @ daz
        g["bz"] += daz.sum(axis=0)
        g["Wr"] += x.T @ dar
        g["Ur"] += h.T @ dar
        g["br"] += dar.sum(axis=0)
        dh_prev += daz @ p["Uz"].T + dar @ p["Ur"].T
        dx[:, t] = daz @ p["Wz"].T + dar @ p["Wr"].T + dan @ p["Wn"].T
        dh = dh_prev
    return dx, g


def bigru_forward(x: Tensor, pf: dict[str, Tensor], pb: dict[str, Tensor]):
    """Concatenated last states ``[B, 2H]`` of a forward and a time-reversed GRU."""
    hf, cf = gru_forward(x, pf)
    hb, cb = gru_forward(x[:, ::-1], pb)
    return np.concatenate([hf, hb], axis=1), (cf, cb, hf.shape[1])


def bigru_backward(dy: Tensor, cache, pf: dict[str, Tensor], pb: dict[str, Tensor]):
    cf, cb, hidden = cache
    dxf, gf = gru_backward(dy[:, :hidden], cf, pf)
    dxb, gb = gru_backward(dy[:, hidden:], cb, pb)
    return dxf + dxb[:, ::-1], gf, gb


# --------------------------------------------------------------------------
# initialisation


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform on ``[-b, b]`` with ``b = sqrt(6 / fan_in)``."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
