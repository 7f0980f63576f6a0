"""Central finite-difference gradient check."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NonFiniteError


def grad_check(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    point: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max over coordinates of ``|g - g_fd| / max(1, |g|, |g_fd|)``.

    ``fun`` returns ``(value, analytic gradient)`` and must be deterministic.
    """
    x = np.array(point, dtype=np.float64)
    f0, g = fun(x.copy())
    g = np.asarray(g, dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError(f"gradient shape {g.shape} != point shape {x.shape}")
    if not np.isfinite(f0) or not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite value or gradient at the check point")
    fd = np.empty_like(x)
    flat, out = x.reshape(-1), fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fun(x.copy())[0]
        flat[i] = orig - h
        fm = fun(x.copy())[0]
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite evaluation at coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(1.0, np.maximum(np.abs(g), np.abs(fd)))
    return float(np.max(np.abs(g - fd) / denom)) if x.size else 0.0
