"""Training losses, each returning ``(value, gradient)``."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .functional import l2_normalize, l2_normalize_backward

CE_EPS = 1e-12


def supcon_loss(z: np.ndarray, labels, tau: float) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss summed over anchors.

    ``L = sum_i -1/P_i sum_{j != i, l_j = l_i} log(exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau))``
    with ``s`` the cosine similarity of rows of ``z`` and ``P_i`` the number of
    positives of anchor ``i``. Rows are expected to be unit norm already; the
    cosine is still computed explicitly so the gradient is exact for any row
    scale. Returns the loss and its gradient with respect to ``z``.
    """
    z = np.asarray(z, dtype=float)
    labels = np.asarray(labels)
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ParameterError(f"need z [M, d] and M labels, got {z.shape} and {labels.shape}")
    if not tau > 0:
        raise ParameterError("tau must be > 0")
    _, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise ParameterError("every label needs at least two members in the batch")

    u, ncache = l2_normalize(z)
    m = z.shape[0]
    s = u @ u.T / tau
    off = ~np.eye(m, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & off
    npos = pos.sum(axis=1)

    s_off = np.where(off, s, -np.inf)
    smax = s_off.max(axis=1, keepdims=True)
    e = np.where(off, np.exp(s_off - smax), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    log_prob = s - smax - np.log(denom)
    loss = float(np.sum(-np.sum(np.where(pos, log_prob, 0.0), axis=1) / npos))

    a = e / denom
    g = a - pos / npos[:, None]
    du = (g + g.T) @ u / tau
    return loss, l2_normalize_backward(du, ncache)


def recon_loss(e: np.ndarray, e_hat: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch mean of the Euclidean norm of ``e_hat - e`` per image.

    Returns the loss and its gradient with respect to ``e_hat`` (zero for a
    sample reconstructed exactly).
    """
    e = np.asarray(e, dtype=float)
    e_hat = np.asarray(e_hat, dtype=float)
    if e.shape != e_hat.shape or e.ndim < 1:
        raise ParameterError(f"shape mismatch {e.shape} vs {e_hat.shape}")
    b = e.shape[0]
    d = (e_hat - e).reshape(b, -1)
    norm = np.sqrt(np.sum(d * d, axis=1))
    safe = np.where(norm > 0, norm, 1.0)
    grad = np.where(norm[:, None] > 0, d / safe[:, None], 0.0) / b
    return float(norm.mean()), grad.reshape(e.shape)


def cross_entropy(p: np.ndarray, q: np.ndarray, check: bool = True) -> tuple[float, np.ndarray]:
    """``-(1/n) sum q log p`` over ``n`` rows with ``p`` clipped to ``[1e-12, 1]``.

    ``check`` verifies that rows of ``p`` sum to one within 1e-6. Returns the
    loss and its gradient with respect to ``p``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ParameterError(f"shape mismatch {p.shape} vs {q.shape}")
    p2 = p.reshape(-1, p.shape[-1])
    q2 = q.reshape(-1, q.shape[-1])
    if check and np.any(np.abs(p2.sum(axis=1) - 1.0) > 1e-6):
        raise ParameterError("probability rows must sum to 1")
    n = p2.shape[0]
    pc = np.clip(p2, CE_EPS, 1.0)
    loss = float(-np.sum(q2 * np.log(pc)) / n)
    inside = (p2 >= CE_EPS) & (p2 <= 1.0)
    grad = np.where(inside, -q2 / (n * pc), 0.0)
    return loss, grad.reshape(p.shape)


def one_hot(labels, num_classes: int = 3) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if np.any((labels < 0) | (labels >= num_classes)):
        raise ParameterError(f"labels must lie in [0, {num_classes})")
    return np.eye(num_classes)[labels]
