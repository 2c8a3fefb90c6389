from __future__ import annotations

from typing import Sequence, TypeVar

import numpy as np

from .tensor import NonFiniteError, ShapeError

P = TypeVar("P")


def sgd_step(params: P, grads: Sequence[np.ndarray], lr: float) -> P:
    """Return ``params - lr * grads``.

    ``params`` is either a sequence of arrays or a parameter set exposing
    ``arrays()`` / ``with_arrays()`` (ModelParams, GeneratorParams, ...).
    The input is never modified.
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    arrays = params.arrays() if hasattr(params, "arrays") else [np.asarray(a, dtype=np.float64) for a in params]
    grads = list(grads)
    if len(arrays) != len(grads):
        raise ShapeError(f"{len(arrays)} parameter arrays but {len(grads)} gradients")
    updated = []
    for a, g in zip(arrays, grads):
        g = np.asarray(g, dtype=np.float64)
        if a.shape != g.shape:
            raise ShapeError(f"parameter shape {a.shape} != gradient shape {g.shape}")
        new = a - lr * g
        if not np.isfinite(new).all():
            raise NonFiniteError("SGD step produced non-finite parameters")
        updated.append(new)
    if hasattr(params, "with_arrays"):
        return params.with_arrays(updated)
    return updated
