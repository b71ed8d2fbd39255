"""Parameter construction and the K-stage forward pass."""

from dataclasses import dataclass

import numpy as np

from ..autodiff import functional as F
from ..autodiff.params import ParamStore
from ..autodiff.tensor import Tensor, as_tensor
from ..errors import DimensionError, NonFiniteError
from .modules import (bam_forward, init_bam, init_irm, init_oem, irm_forward,
                      oem_forward, zeros_like_features)


@dataclass
class StageState:
    D: Tensor
    O: Tensor
    B: Tensor
    h: Tensor
    c: Tensor
    rho: Tensor


def stage_prefix(k):
    return f"stage{k}"


def init_params(cfg, rng=None, dtype=np.float64):
    """Fresh parameters for ``cfg``; ``rng`` is a numpy Generator or a seed."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    store = ParamStore(dtype)
    for k in range(1, cfg.stages + 1):
        s = store.scope(stage_prefix(k))
        init_bam(s.child("bam"), cfg, rng)
        init_oem(s.child("oem"), cfg, rng)
        init_irm(s.child("irm"), cfg, rng)
    return store


def initial_state(image, cfg):
    zeros = Tensor(np.zeros_like(image.data))
    mem = zeros_like_features(image, cfg)
    return StageState(D=image, O=zeros, B=zeros, h=mem, c=mem, rho=None)


def run_stage(state, k, cfg, params, training=False):
    s = params.scope(stage_prefix(k))
    rho = s["oem.rho"]
    b, h, c = bam_forward(state.D, state.O, state.h, state.c, s.child("bam"), cfg, training)
    o = oem_forward(state.O, state.D, b, rho, s.child("oem"), cfg)
    d = irm_forward(b, o, s.child("irm"), cfg, training)
    return StageState(D=d, O=o, B=b, h=h, c=c, rho=rho)


def pipeline_forward(image, cfg, params, training=False):
    """Run all stages on ``image`` (N, 1, H, W) scaled to [0, 1].

    Returns ``(stages, logits)``: one :class:`StageState` per stage in order
    and the final object map ``O^K`` whose sigmoid is the segmentation.
    """
    image = as_tensor(image)
    if image.ndim != 4 or image.shape[1] != 1:
        raise DimensionError(f"image must be (N, 1, H, W), got {image.shape}")
    if image.dtype != params.dtype:
        image = Tensor(image.data.astype(params.dtype), requires_grad=image.requires_grad)
    if not np.all(np.isfinite(image.data)):
        raise NonFiniteError("input image contains non-finite values")
    state = initial_state(image, cfg)
    stages = []
    for k in range(1, cfg.stages + 1):
        state = run_stage(state, k, cfg, params, training)
        stages.append(state)
    logits = state.O
    if not np.all(np.isfinite(logits.data)):
        raise NonFiniteError("forward pass produced non-finite values")
    return stages, logits


def predict(image, cfg, params):
    """Inference helper: ``(stages, probability map)`` as numpy arrays."""
    stages, logits = pipeline_forward(image, cfg, params, training=False)
    return stages, F.sigmoid(logits).data
