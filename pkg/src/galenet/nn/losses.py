"""Classification losses returning ``(mean loss, d loss / d logits)``."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import LabelError, ShapeError
from .layers import log_softmax

N_CLASSES = 4
DEFAULT_FOCAL_GAMMA = 2.0


def _check(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {z.shape}")
    if y.shape != (z.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {z.shape[0]}")
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= z.shape[1]):
        raise LabelError(f"labels must be integers in [0, {z.shape[1] - 1}]")
    return z, y.astype(np.int64)


def focal_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    gamma: float = DEFAULT_FOCAL_GAMMA,
    alpha: Optional[Sequence[float]] = None,
) -> tuple[float, np.ndarray]:
    """Mean of ``-alpha_y * (1 - p_y)**gamma * log p_y`` over the batch.

    ``p`` is the softmax of ``logits``. With ``gamma=0`` and unit ``alpha``
    this is the mean cross-entropy.
    """
    if gamma < 0:
        raise ValueError(f"focal gamma must be >= 0, got {gamma}")
    z, y = _check(logits, labels)
    n, k = z.shape
    a = np.ones(k) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if a.shape != (k,):
        raise ShapeError(f"alpha must have one weight per class ({k}), got shape {a.shape}")

    logp = log_softmax(z)
    p = np.exp(logp)
    rows = np.arange(n)
    logpt = logp[rows, y]
    pt = p[rows, y]
    at = a[y]
    q = -np.expm1(logpt)  # 1 - p_t without cancellation
    mod = q ** gamma
    loss = -at * mod * logpt

    # dL/dz_k = alpha_t * [gamma * (1-pt)^(gamma-1) * pt * log pt - (1-pt)^gamma] * (onehot_k - p_k)
    # at q == 0 the log p_t factor is 0, so the (possibly infinite) power is irrelevant
    dmod = np.zeros_like(q)
    if gamma != 0:
        live = q > 0
        dmod[live] = gamma * q[live] ** (gamma - 1.0)
    coef = at * (dmod * pt * logpt - mod)
    onehot = np.zeros_like(z)
    onehot[rows, y] = 1.0
    grad = coef[:, None] * (onehot - p) / max(n, 1)
    return float(loss.mean()) if n else 0.0, grad


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    z, y = _check(logits, labels)
    n = z.shape[0]
    logp = log_softmax(z)
    loss = -logp[np.arange(n), y].mean()
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    return float(loss), grad / n
