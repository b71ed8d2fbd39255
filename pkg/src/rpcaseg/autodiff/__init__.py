"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import functional
from .optim import AdamState, adam_step, poly_lr
from .params import ParamStore, Scope, init_batch_norm, init_conv
from .tensor import Tape, Tensor, as_tensor, current_tape

__all__ = [
    "functional", "Tape", "Tensor", "as_tensor", "current_tape",
    "ParamStore", "Scope", "init_conv", "init_batch_norm",
    "AdamState", "adam_step", "poly_lr",
]
