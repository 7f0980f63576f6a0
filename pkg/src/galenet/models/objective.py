"""Training objectives and the LogReg fitting protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import DegenerateLabelsError, GaLeNetError, LabelError
from ..metrics import roc_auc_macro
from ..nn.layers import softmax
from ..nn.losses import DEFAULT_FOCAL_GAMMA, focal_loss
from ..nn.optim import lbfgs_minimize
from .networks import MODALITIES, LogReg, LogRegConfig, ModelOutput, select_features

log = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(10.0 ** k for k in range(-3, 4))


def combined_loss(
    output: ModelOutput,
    labels: np.ndarray,
    gamma: float = DEFAULT_FOCAL_GAMMA,
    alpha: Optional[Sequence[float]] = None,
    expect_aux: Optional[bool] = None,
) -> tuple[float, np.ndarray, Optional[tuple[np.ndarray, ...]]]:
    """Focal loss of the main head plus the unweighted sum over auxiliary heads.

    Returns ``(loss, d/d main_logits, d/d aux_logits or None)``.
    """
    if expect_aux and output.aux_logits is None:
        raise GaLeNetError("model has auxiliary heads but the output carries no aux logits")
    loss, g_main = focal_loss(output.main_logits, labels, gamma, alpha)
    g_aux = None
    if output.aux_logits is not None:
        g_aux = []
        for logits in output.aux_logits:
            l_j, g_j = focal_loss(logits, labels, gamma, alpha)
            loss += l_j
            g_aux.append(g_j)
        g_aux = tuple(g_aux)
    return loss, g_main, g_aux


def logreg_objective(x: np.ndarray, y: np.ndarray, C: float, n_classes: int = 4):
    """``theta -> (mean cross-entropy + ||W||^2 / (2 C N), gradient)``; bias unpenalised.

    ``theta`` packs the ``I x K`` weight matrix row-major followed by the bias.
    """
    n, d = x.shape
    rows = np.arange(n)
    nw = d * n_classes

    def fun(theta):
        w = theta[:nw].reshape(d, n_classes)
        b = theta[nw:]
        z = x @ w + b
        z -= z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        f = -logp[rows, y].mean() + (w * w).sum() / (2.0 * C * n)
        p[rows, y] -= 1.0
        p /= n
        gw = x.T @ p + w / (C * n)
        return float(f), np.concatenate([gw.ravel(), p.sum(axis=0)])

    return fun


@dataclass
class CFit:
    C: float
    val_roc_auc: float
    converged: bool
    n_iter: int
    weight_norm: float


@dataclass
class LogRegFit:
    model: LogReg
    C: float
    grid: list[CFit] = field(default_factory=list)


def fit_logreg(x: np.ndarray, y: np.ndarray, C: float, max_iter: int = 1000, tol: float = 1e-6,
               modalities: Sequence[str] = MODALITIES, n_classes: int = 4):
    """Fit at a single ``C``; returns ``(model, L-BFGS result)``."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise LabelError("no training examples")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("training labels contain a single class")
    d = x.shape[1]
    res = lbfgs_minimize(logreg_objective(x, y, C, n_classes), np.zeros(d * n_classes + n_classes),
                         max_iter=max_iter, tol=tol)
    if not res.converged:
        log.warning("L-BFGS did not converge for C=%g: %s (|g|=%.2e)", C, res.message, res.grad_norm)
    model = LogReg(LogRegConfig(d, tuple(modalities), n_classes, C))
    model.linear.params["weight"][...] = res.x[: d * n_classes].reshape(d, n_classes)
    model.linear.params["bias"][...] = res.x[d * n_classes:]
    return model, res


def train_logreg(
    train,
    val,
    C_grid: Sequence[float] = DEFAULT_C_GRID,
    modalities: Sequence[str] = MODALITIES,
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> LogRegFit:
    """Fit one model per ``C`` and keep the one with the best validation macro ROC AUC.

    Ties go to the smaller ``C``.
    """
    xt = select_features(train, modalities)
    xv = select_features(val, modalities)
    best = None
    grid = []
    for C in C_grid:
        model, res = fit_logreg(xt, train.labels, C, max_iter, tol, modalities)
        probs = softmax(xv @ model.linear.params["weight"] + model.linear.params["bias"])
        auc = roc_auc_macro(val.labels, probs)
        grid.append(CFit(float(C), auc, res.converged, res.n_iter,
                         float(np.linalg.norm(model.linear.params["weight"]))))
        if best is None or auc > best[0]:
            best = (auc, C, model)
    log.info("LogReg C grid: %s", [(g.C, round(g.val_roc_auc, 4)) for g in grid])
    return LogRegFit(best[2], float(best[1]), grid)
