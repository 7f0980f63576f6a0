"""Mini-batch training with early stopping and multi-seed experiments."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInputError, InputError
from .metrics import EvalReport, evaluate, summarize
from .models import (
    MODALITIES,
    ConcatMLPConfig,
    GaLeNetConfig,
    Model,
    build_concat_mlp,
    build_galenet,
    combined_loss,
    select_features,
    train_logreg,
)
from .models.objective import DEFAULT_C_GRID
from .nn.layers import softmax
from .nn.optim import AdamState, adam_step
from .rng import make_rng

log = logging.getLogger(__name__)

NEURAL_KINDS = ("concat-mlp", "galenet")
MODEL_KINDS = ("logreg",) + NEURAL_KINDS


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 5
    n_seeds: int = 5
    seed: int = 0
    min_delta: float = 1e-6
    focal_gamma: float = 2.0
    focal_alpha: Optional[tuple[float, ...]] = None
    eval_batch_size: int = 4096
    monitor: str = "loss"  # "loss": full objective; "main_loss": main head only

    def __post_init__(self):
        if self.monitor not in ("loss", "main_loss"):
            raise ValueError(f"monitor must be 'loss' or 'main_loss', got {self.monitor!r}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batchnorm)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


class EarlyStopping:
    """Stop once the monitored loss fails to improve by more than ``min_delta``
    for ``patience`` consecutive epochs. Epochs are numbered from 1."""

    def __init__(self, patience: int = 5, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; returns True when training should stop."""
        if loss < self.best_loss - self.min_delta:
            self.best_loss = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved_last(self) -> bool:
        return self.bad_epochs == 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_balanced_accuracy: float
    val_macro_roc_auc: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stop_reason: str = ""

    def to_jsonl(self, seed: Optional[int] = None) -> str:
        lines = []
        for rec in self.epochs:
            d = asdict(rec)
            if seed is not None:
                d["seed"] = seed
            lines.append(json.dumps(d, sort_keys=True))
        return "".join(line + "\n" for line in lines)


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing batch of one is merged into its predecessor."""
    perm = rng.permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def predict_logits(model: Model, data, batch_size: int = 4096):
    """Eval-mode forward in chunks; returns ``(main, aux or None)``."""
    mains, auxes = [], []
    for start in range(0, len(data), batch_size):
        out = model.forward(data.subset(np.arange(start, min(start + batch_size, len(data)))), train=False)
        mains.append(out.main_logits)
        if out.aux_logits is not None:
            auxes.append(out.aux_logits)
    main = np.concatenate(mains) if mains else np.zeros((0, 4))
    aux = tuple(np.concatenate([a[j] for a in auxes]) for j in range(len(auxes[0]))) if auxes else None
    return main, aux


def evaluation_loss(model: Model, data, config: TrainConfig) -> tuple[float, np.ndarray]:
    """Monitored loss in eval mode and the main-head probabilities."""
    from .models import ModelOutput

    main, aux = predict_logits(model, data, config.eval_batch_size)
    if config.monitor == "main_loss":
        aux = None
    loss, _, _ = combined_loss(ModelOutput(main, aux), data.labels, config.focal_gamma, config.focal_alpha)
    return loss, softmax(main)


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.tensors().items()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for k, v in model.tensors().items():
        v[...] = snap[k]


def train(model: Model, train_set, val_set, config: TrainConfig, seed: int = 0):
    """Train with Adam on the combined focal objective; keep the best-validation-loss epoch.

    The monitored validation loss (``config.monitor``) is computed in eval
    mode. Returns ``(model, TrainHistory)`` with the
    model's tensors restored to the best epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptyInputError("training needs non-empty train and val splits")
    if len(train_set) < 2:
        raise InputError("train split needs at least 2 examples (batchnorm)")
    if not train_set.labeled or not val_set.labeled:
        raise InputError("train and val splits must be fully labeled")
    rng = make_rng(seed, "shuffle")
    state = AdamState(lr=config.learning_rate)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    params = model.params()
    best = _snapshot(model)

    for epoch in range(1, config.max_epochs + 1):
        total, count = 0.0, 0
        for idx in make_batches(len(train_set), config.batch_size, rng):
            batch = train_set.subset(idx)
            model.zero_grad()
            out = model.forward(batch, train=True)
            loss, g_main, g_aux = combined_loss(out, batch.labels, config.focal_gamma, config.focal_alpha,
                                                expect_aux=model.has_aux)
            model.backward(g_main, g_aux)
            adam_step(params, model.grads(), state)
            total += loss * len(idx)
            count += len(idx)

        val_loss, val_probs = evaluation_loss(model, val_set, config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = evaluate(val_set.labels, val_probs)
        history.epochs.append(EpochRecord(epoch, total / count, val_loss,
                                          rep.balanced_accuracy, rep.macro_roc_auc))
        stop = stopper.update(epoch, val_loss)
        if stopper.improved_last:
            best = _snapshot(model)
        log.debug("epoch %d train %.5f val %.5f", epoch, total / count, val_loss)
        if stop:
            history.stop_reason = "patience"
            break
    else:
        history.stop_reason = "max_epochs"

    _restore(model, best)
    history.best_epoch = stopper.best_epoch
    history.best_val_loss = float(stopper.best_loss)
    return model, history


@dataclass
class SeedRun:
    seed: int
    model: Model
    report: EvalReport
    history: Optional[TrainHistory] = None
    C: Optional[float] = None


@dataclass
class ExperimentResult:
    kind: str
    runs: list[SeedRun]
    summary: dict

    def to_dict(self, scenario: Optional[str] = None) -> dict:
        runs = []
        for r in self.runs:
            entry = {
                "seed": r.seed,
                "balanced_accuracy": r.report.balanced_accuracy,
                "macro_pr_auc": r.report.macro_pr_auc,
                "macro_roc_auc": r.report.macro_roc_auc,
                "confusion": r.report.confusion,
            }
            if r.history is not None:
                entry.update(best_epoch=r.history.best_epoch, epochs=len(r.history.epochs),
                             best_val_loss=r.history.best_val_loss, stop_reason=r.history.stop_reason)
            if r.C is not None:
                entry["C"] = r.C
            runs.append(entry)
        d = {"model": self.kind, "n_seeds": len(self.runs), "summary": self.summary, "runs": runs}
        if scenario is not None:
            d["scenario"] = scenario
        return d


def build_model(kind: str, train_set, seed: int, overrides: Optional[dict] = None) -> Model:
    image_dim = train_set.images[0].shape[1]
    weather_dim = train_set.weather.shape[1]
    overrides = dict(overrides or {})
    if kind == "galenet":
        return build_galenet(GaLeNetConfig(image_dim=image_dim, weather_dim=weather_dim, seed=seed, **overrides))
    if kind == "concat-mlp":
        return build_concat_mlp(ConcatMLPConfig(image_dim=image_dim, weather_dim=weather_dim, seed=seed, **overrides))
    raise ValueError(f"unknown neural model kind {kind!r}")


def run_experiment(
    kind: str,
    data,
    config: TrainConfig,
    model_overrides: Optional[dict] = None,
    modalities: Sequence[str] = MODALITIES,
    C_grid: Sequence[float] = DEFAULT_C_GRID,
) -> ExperimentResult:
    """Train ``config.n_seeds`` models (seeds ``seed .. seed + n - 1``) and
    report mean and population std of the test metrics.

    LogReg fitting is deterministic, so it is fitted once and its report
    repeated for every seed.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    train_set, val_set, test_set = data["train"], data["val"], data["test"]
    if len(test_set) == 0:
        raise EmptyInputError("test split is empty")
    seeds = [config.seed + i for i in range(config.n_seeds)]
    runs = []
    if kind == "logreg":
        fit = train_logreg(train_set, val_set, C_grid, modalities)
        report = evaluate(test_set.labels, fit.model.predict_proba(test_set))
        runs = [SeedRun(s, fit.model, report, None, fit.C) for s in seeds]
    else:
        for s in seeds:
            model = build_model(kind, train_set, s, model_overrides)
            model, history = train(model, train_set, val_set, config, seed=s)
            main, _ = predict_logits(model, test_set, config.eval_batch_size)
            report = evaluate(test_set.labels, softmax(main))
            log.info("%s seed %d: best epoch %d, test bal. acc %.4f", kind, s, history.best_epoch,
                     report.balanced_accuracy)
            runs.append(SeedRun(s, model, report, history))
    return ExperimentResult(kind, runs, summarize([r.report for r in runs]))


__all__ = [
    "EarlyStopping",
    "EpochRecord",
    "ExperimentResult",
    "SeedRun",
    "TrainConfig",
    "TrainHistory",
    "build_model",
    "evaluation_loss",
    "make_batches",
    "predict_logits",
    "run_experiment",
    "select_features",
    "train",
]
