from .gradcheck import grad_check
from .layers import (
    BatchNorm,
    Dropout,
    Layer,
    Linear,
    ReLU,
    Sequential,
    encoder_block,
    linear,
    log_softmax,
    softmax,
    softmax_backward,
)
from .losses import cross_entropy, focal_loss
from .optim import AdamState, LBFGSResult, adam_step, lbfgs_minimize, strong_wolfe

__all__ = [
    "AdamState",
    "BatchNorm",
    "Dropout",
    "LBFGSResult",
    "Layer",
    "Linear",
    "ReLU",
    "Sequential",
    "adam_step",
    "cross_entropy",
    "encoder_block",
    "focal_loss",
    "grad_check",
    "lbfgs_minimize",
    "linear",
    "log_softmax",
    "softmax",
    "softmax_backward",
    "strong_wolfe",
]
