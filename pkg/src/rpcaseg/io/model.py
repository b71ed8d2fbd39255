"""Saving and restoring a trained network together with its config."""

import numpy as np

from ..errors import FormatError
from ..unfolded.pipeline import init_params
from .checkpoint import load_checkpoint, save_checkpoint
from .configfile import canonical_text, parse_config


def save_model(path, run, params):
    """Write ``params`` (weights and BN statistics) and ``run`` to ``path``; returns the bytes."""
    return save_checkpoint(path, canonical_text(run), params.state_dict())


def load_model(path, dtype=None):
    """``(RunConfig, ParamStore)`` from a checkpoint.

    ``dtype`` defaults to the training precision recorded in the config.
    """
    text, tensors = load_checkpoint(path)
    try:
        run = parse_config(text, f"{path} config block")
    except Exception as exc:
        raise FormatError(f"{path}: invalid config block ({exc})") from None
    dtype = np.dtype(dtype or run.train.dtype)
    params = init_params(run.net, 0, dtype)
    try:
        params.load_state_dict(tensors, strict=True)
    except KeyError as exc:
        raise FormatError(f"{path}: tensors do not match the config ({exc.args[0]})") from None
    return run, params
