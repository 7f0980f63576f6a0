from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .networks import (
    MODALITIES,
    ConcatMLP,
    ConcatMLPConfig,
    GaLeNet,
    GaLeNetConfig,
    LogReg,
    LogRegConfig,
    Model,
    ModelOutput,
    build_concat_mlp,
    build_galenet,
    build_logreg,
    count_params,
    expand_modalities,
    model_from_config,
    select_features,
)
from .objective import DEFAULT_C_GRID, LogRegFit, combined_loss, fit_logreg, logreg_objective, train_logreg

__all__ = [
    "DEFAULT_C_GRID",
    "MODALITIES",
    "Checkpoint",
    "ConcatMLP",
    "ConcatMLPConfig",
    "GaLeNet",
    "GaLeNetConfig",
    "LogReg",
    "LogRegConfig",
    "LogRegFit",
    "Model",
    "ModelOutput",
    "build_concat_mlp",
    "build_galenet",
    "build_logreg",
    "combined_loss",
    "count_params",
    "expand_modalities",
    "fit_logreg",
    "load_checkpoint",
    "logreg_objective",
    "model_from_config",
    "save_checkpoint",
    "select_features",
    "train_logreg",
]
