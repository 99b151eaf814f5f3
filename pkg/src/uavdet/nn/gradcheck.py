"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

LossFn = Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]]


def grad_check(op: LossFn, inputs: dict[str, np.ndarray], eps: float = 1e-4,
               max_coords: int = 200, seed: int = 0, floor: float = 1e-7) -> float:
    """Largest relative error between ``op``'s analytic gradient and central differences.

    ``op(inputs)`` returns ``(scalar, {name: gradient})``. Tensors with more
    than ``max_coords`` entries are checked on ``max_coords`` coordinates
    drawn without replacement; smaller ones on every coordinate. The relative
    error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``; the floor
    keeps round-off on vanishing gradients from reading as a large ratio.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    _, analytic = op(inputs)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(inputs):
        x = inputs[name]
        flat = x.reshape(-1)
        coords = np.arange(flat.size)
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_flat = np.asarray(analytic[name], dtype=float).reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp, _ = op(inputs)
            flat[i] = orig - eps
            fm, _ = op(inputs)
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = a_flat[i]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
