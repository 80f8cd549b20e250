from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def grad_check(build_loss: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               max_coords: int = 10_000, seed: int = 0) -> float:
    """Largest relative error between backprop and central differences.

    ``build_loss`` must rebuild the graph from the current parameter values on
    every call and be deterministic.  When the parameters hold more than
    ``max_coords`` coordinates a seeded random subset is checked.
    """
    with Tape() as tape:
        loss = build_loss()
    grads = backward(loss, tape, wrt=params)

    coords = [(pi, j) for pi, p in enumerate(params) for j in range(p.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    worst = 0.0
    for pi, j in coords:
        p = params[pi]
        flat = p.data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + eps
        up = float(build_loss().data)
        flat[j] = orig - eps
        down = float(build_loss().data)
        flat[j] = orig
        numeric = (up - down) / (2 * eps)
        analytic = grads[p].reshape(-1)[j]
        worst = max(worst, float(relative_error(analytic, numeric)))
    return worst
