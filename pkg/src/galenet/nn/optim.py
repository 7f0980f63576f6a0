"""Adam and L-BFGS."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ShapeError

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if params.keys() != grads.keys():
        raise ShapeError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {grads[name].shape} != parameter shape {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad_norm: float  # infinity norm
    n_iter: int
    n_evals: int
    converged: bool
    message: str


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating f and f' at a and b, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _approx_wolfe(f0, g0, fa, ga, c1, c2):
    # Hager-Zhang approximate Wolfe test; decides steps whose decrease in f
    # is below round-off, where the Armijo test is meaningless.
    return fa <= f0 + 1e-10 * abs(f0) and c2 * g0 <= ga <= (2 * c1 - 1) * g0


def strong_wolfe(phi, f0, g0, step=1.0, c1=1e-4, c2=0.9, max_iter=25, step_max=1e10):
    """Line search for a step satisfying the strong Wolfe conditions.

    ``phi(a)`` returns ``(f, directional derivative, payload)``. Returns
    ``(step, f, payload, ok)``; on failure ``ok`` is False and the best
    point seen is returned.
    """
    a_prev, f_prev, g_prev = 0.0, f0, g0
    best = (0.0, f0, None)
    a = step
    for i in range(max_iter):
        fa, ga, payload = phi(a)
        if fa < best[1]:
            best = (a, fa, payload)
        if _approx_wolfe(f0, g0, fa, ga, c1, c2):
            return a, fa, payload, True
        if fa > f0 + c1 * a * g0 or (i > 0 and fa >= f_prev):
            return _zoom(phi, f0, g0, a_prev, f_prev, g_prev, a, fa, ga, c1, c2, max_iter, best)
        if abs(ga) <= -c2 * g0:
            return a, fa, payload, True
        if ga >= 0:
            return _zoom(phi, f0, g0, a, fa, ga, a_prev, f_prev, g_prev, c1, c2, max_iter, best)
        a_prev, f_prev, g_prev = a, fa, ga
        a = min(2.0 * a, step_max)
    return best[0], best[1], best[2], False


def _zoom(phi, f0, g0, lo, flo, glo, hi, fhi, ghi, c1, c2, max_iter, best):
    for _ in range(max_iter):
        a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
        left, right = min(lo, hi), max(lo, hi)
        margin = 0.1 * (right - left)
        if a is None or not (left + margin <= a <= right - margin):
            a = 0.5 * (lo + hi)
        fa, ga, payload = phi(a)
        if fa < best[1]:
            best = (a, fa, payload)
        if _approx_wolfe(f0, g0, fa, ga, c1, c2):
            return a, fa, payload, True
        if fa > f0 + c1 * a * g0 or fa >= flo:
            hi, fhi, ghi = a, fa, ga
        else:
            if abs(ga) <= -c2 * g0:
                return a, fa, payload, True
            if ga * (hi - lo) >= 0:
                hi, fhi, ghi = lo, flo, glo
            lo, flo, glo = a, fa, ga
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    return best[0], best[1], best[2], False


def lbfgs_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    memory: int = 10,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> LBFGSResult:
    """Minimize a smooth function given ``fun(x) -> (value, gradient)``.

    Two-loop recursion over the last ``memory`` curvature pairs, strong
    Wolfe line search. Stops when the gradient infinity-norm drops below
    ``tol`` or after ``max_iter`` iterations. A failed line search ends the
    run with ``converged=False`` and the best iterate so far.
    """
    x = np.array(x0, dtype=np.float64).ravel()
    f, g = fun(x)
    n_evals = 1
    pairs: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=memory)
    failed_last = False

    for it in range(max_iter + 1):
        gnorm = float(np.abs(g).max()) if g.size else 0.0
        if gnorm < tol:
            return LBFGSResult(x, f, gnorm, it, n_evals, True, "gradient tolerance reached")
        if it == max_iter:
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        gd = float(g @ d)
        if gd >= 0:
            pairs.clear()
            d = -g
            gd = float(g @ d)

        first = 1.0 if pairs else min(1.0, 1.0 / max(float(np.abs(g).sum()), 1e-300))

        def phi(step):
            nonlocal n_evals
            xn = x + step * d
            fn, gn = fun(xn)
            n_evals += 1
            return fn, float(gn @ d), (xn, gn)

        step, f_new, payload, ok = strong_wolfe(phi, f, gd, step=first)
        if not ok:
            log.debug("L-BFGS line search failed at iteration %d", it)
            # one retry along steepest descent with a fresh memory
            if failed_last or not pairs:
                if payload is not None:
                    x, f, g = payload[0], f_new, payload[1]
                gnorm = float(np.abs(g).max())
                return LBFGSResult(x, f, gnorm, it + 1, n_evals, gnorm < tol, "line search failed")
            failed_last = True
            pairs.clear()
            if payload is None:
                continue
        else:
            failed_last = False
        x_new, g_new = payload
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new

    gnorm = float(np.abs(g).max()) if g.size else 0.0
    return LBFGSResult(x, f, gnorm, max_iter, n_evals, False, "maximum iterations reached")
