"""Mini-batch Adam training with polynomial learning-rate decay."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import functional as F
from ..autodiff.optim import AdamState, adam_step, poly_lr
from ..autodiff.tensor import Tape, Tensor
from ..errors import DataError, DimensionError, NonFiniteError, TrainingDiverged
from .config import LossConfig, NetConfig, TrainSchedule
from .loss import loss as total_loss
from .pipeline import init_params, pipeline_forward

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    params: object
    loss_trace: list = field(default_factory=list)
    iterations: int = 0


def _as_batch(arr, dtype):
    arr = np.asarray(arr, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1:
        raise DimensionError(f"expected (N, H, W) or (N, 1, H, W) arrays, got {arr.shape}")
    return arr


def train(images, masks, cfg=NetConfig(), schedule=TrainSchedule(), loss_cfg=LossConfig(),
          params=None, on_epoch=None):
    """Fit the unfolded network to ``(images, masks)``.

    The seed in ``schedule`` fixes both the initial weights and the shuffle
    order, so repeated calls give bit-identical results. ``loss_trace`` holds
    the mean batch loss of each epoch. A non-finite loss or gradient raises
    :class:`TrainingDiverged` carrying the parameters from the end of the
    last completed epoch.
    """
    dtype = np.dtype(schedule.dtype)
    x_all = _as_batch(images, dtype)
    y_all = _as_batch(masks, dtype)
    if x_all.shape != y_all.shape:
        raise DimensionError(f"images {x_all.shape} and masks {y_all.shape} differ")
    init_seq, shuffle_seq = np.random.SeedSequence(schedule.seed).spawn(2)
    if params is None:
        params = init_params(cfg, np.random.default_rng(init_seq), dtype)
    shuffle_rng = np.random.default_rng(shuffle_seq)

    n = len(x_all)
    if n == 0 and schedule.epochs > 0:
        raise DataError("training set is empty")
    bs = schedule.batch_size
    steps_per_epoch = math.ceil(n / bs) if n else 0
    total = schedule.epochs * steps_per_epoch
    state = AdamState()
    result = TrainResult(params=params)
    last_good = params.snapshot()
    it = 0
    for epoch in range(schedule.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            x, y = x_all[idx], y_all[idx]
            params.zero_grad()
            try:
                with Tape() as tape:
                    stages, logits = pipeline_forward(x, cfg, params, training=True)
                    value = total_loss(F.sigmoid(logits), Tensor(y), stages[-1].D, Tensor(x), loss_cfg)
                lv = float(value.data)
                if not math.isfinite(lv):
                    raise NonFiniteError(f"loss became {lv}")
                tape.backward(value)
                grads = {name: t.grad for name, t in params.params.items()}
                adam_step(params.params, grads, state, poly_lr(schedule.base_lr, it, total, schedule.power))
            except NonFiniteError as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", last_good, epoch) from exc
            it += 1
            batch_losses.append(lv)
        mean_loss = float(np.mean(batch_losses))
        result.loss_trace.append(mean_loss)
        last_good = params.snapshot()
        log.debug("epoch %d loss %.6f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    result.iterations = it
    return result
