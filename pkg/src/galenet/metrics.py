"""Balanced accuracy, macro one-vs-rest ROC AUC and average precision.

Rank-based conventions: tied scores earn half credit in ROC AUC (the
Mann-Whitney statistic), and average precision evaluates precision once per
distinct score threshold. Classes with no positives or no negatives in the
evaluated labels are left out of the macro averages.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInputError, NoComputableClassError, ShapeError

N_CLASSES = 4


def _labels(labels, n_classes=N_CLASSES) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {y.shape}")
    if y.size == 0:
        raise EmptyInputError("no examples to evaluate")
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    return y


def balanced_accuracy(labels, predictions, n_classes: int = N_CLASSES) -> float:
    """Unweighted mean of per-class recall over classes present in ``labels``."""
    y = _labels(labels, n_classes)
    p = np.asarray(predictions).astype(np.int64)
    if p.shape != y.shape:
        raise ShapeError(f"{len(p)} predictions for {len(y)} labels")
    recalls = [np.mean(p[y == c] == c) for c in range(n_classes) if np.any(y == c)]
    return float(np.mean(recalls))


def confusion_matrix(labels, predictions, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with true class on rows, predicted class on columns."""
    y = _labels(labels, n_classes)
    p = np.asarray(predictions).astype(np.int64)
    if p.shape != y.shape:
        raise ShapeError(f"{len(p)} predictions for {len(y)} labels")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def _scores(scores, n):
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != n:
        raise ShapeError(f"scores must be N x C with N={n}, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def _computable(y, n_classes):
    included, excluded = [], []
    for c in range(n_classes):
        pos = int(np.sum(y == c))
        (included if 0 < pos < len(y) else excluded).append(c)
    if not included:
        raise NoComputableClassError("no class has both positive and negative examples")
    if excluded:
        warnings.warn(f"classes {excluded} lack positives or negatives; excluded from macro average",
                      stacklevel=3)
    return included, excluded


def binary_roc_auc(positive: np.ndarray, score: np.ndarray) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    ranks = rankdata(score)  # average ranks for ties
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(positive: np.ndarray, score: np.ndarray) -> float:
    """Step-wise area under the precision-recall curve.

    Sum over distinct thresholds of ``(R_k - R_{k-1}) * P_k``.
    """
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-np.asarray(score, dtype=np.float64), kind="mergesort")
    s = np.asarray(score)[order]
    hit = positive[order]
    tp = np.cumsum(hit)
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_at = tp[ends].astype(np.float64)
    precision = tp_at / (ends + 1)
    recall = tp_at / tp[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_curve(positive: np.ndarray, score: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) at each distinct threshold, starting at (0, 0)."""
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-np.asarray(score, dtype=np.float64), kind="mergesort")
    s = np.asarray(score)[order]
    hit = positive[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(hit)[ends]
    fp = (ends + 1) - tp
    n_pos = max(int(positive.sum()), 1)
    n_neg = max(int((~positive).sum()), 1)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def roc_auc_macro(labels, scores, n_classes: int = N_CLASSES) -> float:
    y = _labels(labels, n_classes)
    s = _scores(scores, len(y))
    included, _ = _computable(y, n_classes)
    return float(np.mean([binary_roc_auc(y == c, s[:, c]) for c in included]))


def pr_auc_macro(labels, scores, n_classes: int = N_CLASSES) -> float:
    y = _labels(labels, n_classes)
    s = _scores(scores, len(y))
    included, _ = _computable(y, n_classes)
    return float(np.mean([average_precision(y == c, s[:, c]) for c in included]))


@dataclass
class EvalReport:
    """Evaluation summary; key order follows the reporting convention Bal. Acc., PR AUC, ROC AUC."""

    balanced_accuracy: float
    macro_pr_auc: float
    macro_roc_auc: float
    confusion: list[list[int]]
    per_class_roc: list[Optional[dict]] = field(default_factory=list)
    excluded_classes: list[int] = field(default_factory=list)
    n_examples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        required = ("balanced_accuracy", "macro_pr_auc", "macro_roc_auc", "confusion")
        missing = [k for k in required if k not in d]
        if missing:
            raise ValueError(f"EvalReport is missing {missing}")
        cm = np.asarray(d["confusion"])
        if cm.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}")
        for key in required[:3]:
            if not 0.0 <= float(d[key]) <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1]")
        return cls(
            float(d["balanced_accuracy"]),
            float(d["macro_pr_auc"]),
            float(d["macro_roc_auc"]),
            [[int(v) for v in row] for row in d["confusion"]],
            list(d.get("per_class_roc", [])),
            [int(c) for c in d.get("excluded_classes", [])],
            int(d.get("n_examples", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def roc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "fpr", "tpr"])
        for c, curve in enumerate(self.per_class_roc):
            if curve is None:
                continue
            for f, t in zip(curve["fpr"], curve["tpr"]):
                w.writerow([c, repr(float(f)), repr(float(t))])
        return buf.getvalue()


def evaluate(labels, probs, n_classes: int = N_CLASSES) -> EvalReport:
    """Full report from integer labels and an ``N x C`` score matrix."""
    y = _labels(labels, n_classes)
    s = _scores(probs, len(y))
    pred = s.argmax(axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        included, excluded = _computable(y, n_classes)
    if excluded:
        warnings.warn(f"classes {excluded} lack positives or negatives; excluded from macro average",
                      stacklevel=2)
    curves: list[Optional[dict]] = []
    for c in range(n_classes):
        if c in included:
            fpr, tpr = roc_curve(y == c, s[:, c])
            curves.append({"fpr": fpr.tolist(), "tpr": tpr.tolist()})
        else:
            curves.append(None)
    return EvalReport(
        balanced_accuracy=balanced_accuracy(y, pred, n_classes),
        macro_pr_auc=float(np.mean([average_precision(y == c, s[:, c]) for c in included])),
        macro_roc_auc=float(np.mean([binary_roc_auc(y == c, s[:, c]) for c in included])),
        confusion=confusion_matrix(y, pred, n_classes).tolist(),
        per_class_roc=curves,
        excluded_classes=excluded,
        n_examples=int(len(y)),
    )


def summarize(reports: Sequence[EvalReport]) -> dict:
    """Mean and population standard deviation of the headline metrics."""
    if not reports:
        raise EmptyInputError("no reports to summarize")
    out = {}
    for key in ("balanced_accuracy", "macro_pr_auc", "macro_roc_auc"):
        vals = np.array([getattr(r, key) for r in reports], dtype=np.float64)
        if np.all(vals == vals[0]):
            # avoid rounding noise for constant samples
            out[key] = {"mean": float(vals[0]), "std": 0.0}
        else:
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out
