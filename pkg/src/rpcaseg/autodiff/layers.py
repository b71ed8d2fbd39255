"""Composite layers built from :mod:`functional` primitives.

Layer functions read their weights from a :class:`~rpcaseg.autodiff.params.Scope`
and the matching ``init_*`` helpers create those weights.
"""

import math

import numpy as np

from ..errors import DimensionError
from . import functional as F
from .params import init_batch_norm, init_conv


def conv(x, scope, name, padding=None, stride=1):
    w = scope[f"{name}.weight"]
    b = scope[f"{name}.bias"] if scope.has(f"{name}.bias") else None
    if padding is None:
        padding = w.shape[2] // 2
    return F.conv2d(x, w, b, stride=stride, padding=padding)


def batch_norm(x, scope, name, training):
    return F.batch_norm(
        x, scope[f"{name}.weight"], scope[f"{name}.bias"],
        scope.buffer(f"{name}.running_mean"), scope.buffer(f"{name}.running_var"),
        training)


def conv_bn_relu(x, scope, name, training):
    return F.relu(batch_norm(conv(x, scope, f"{name}.conv"), scope, f"{name}.bn", training))


def init_conv_bn(scope, name, c_in, c_out, k, rng):
    init_conv(scope, f"{name}.conv", c_in, c_out, k, rng)
    init_batch_norm(scope, f"{name}.bn", c_out)


# ------------------------------------------------------------ residual block

def init_residual_block(scope, channels, k, rng):
    for i in (1, 2):
        init_conv(scope, f"conv{i}", channels, channels, k, rng)
        init_batch_norm(scope, f"bn{i}", channels)


def residual_block(x, scope, training):
    """[Conv + BN + ReLU + Conv + BN] plus identity skip."""
    y = F.relu(batch_norm(conv(x, scope, "conv1"), scope, "bn1", training))
    y = batch_norm(conv(y, scope, "conv2"), scope, "bn2", training)
    return y + x


# ----------------------------------------------------------------- ConvLSTM

def init_conv_lstm(scope, c_in, hidden, k, rng):
    """Gate weights stacked in the order input, forget, cell, output."""
    store = scope.store
    bx = math.sqrt(1.0 / (c_in * k * k))
    bh = math.sqrt(1.0 / (hidden * k * k))
    store.add_param(scope._full("w_x"), rng.uniform(-bx, bx, (4 * hidden, c_in, k, k)))
    store.add_param(scope._full("w_h"), rng.uniform(-bh, bh, (4 * hidden, hidden, k, k)))
    store.add_param(scope._full("bias"), np.zeros(4 * hidden))


def conv_lstm_cell(x, h_prev, c_prev, scope):
    """One ConvLSTM step; returns ``(h, c)``.

    i = sigmoid(Wx_i * x + Wh_i * h_prev + b_i)
    f = sigmoid(Wx_f * x + Wh_f * h_prev + b_f)
    c = f o c_prev + i o tanh(Wx_c * x + Wh_c * h_prev + b_c)
    o = sigmoid(Wx_o * x + Wh_o * h_prev + b_o)
    h = o o tanh(c)
    """
    w_x, w_h, b = scope["w_x"], scope["w_h"], scope["bias"]
    hidden = w_h.shape[1]
    if x.shape[2:] != h_prev.shape[2:] or h_prev.shape != c_prev.shape:
        raise DimensionError(f"ConvLSTM state mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}")
    if h_prev.shape[1] != hidden:
        raise DimensionError(f"ConvLSTM hidden width {hidden}, state has {h_prev.shape[1]} channels")
    pad = w_x.shape[2] // 2
    z = F.conv2d(x, w_x, b, padding=pad)
    # A zero initial state contributes nothing to the gates or to dW_h.
    if h_prev.requires_grad or h_prev.data.any():
        z = z + F.conv2d(h_prev, w_h, None, padding=pad)
    gi = F.sigmoid(F.channel_slice(z, 0, hidden))
    gf = F.sigmoid(F.channel_slice(z, hidden, 2 * hidden))
    gc = F.tanh(F.channel_slice(z, 2 * hidden, 3 * hidden))
    go = F.sigmoid(F.channel_slice(z, 3 * hidden, 4 * hidden))
    c = gf * c_prev + gi * gc
    h = go * F.tanh(c)
    return h, c


# -------------------------------------------------------- channel attention

def attention_width(channels, ratio):
    return max(1, channels // ratio)


def init_channel_attention(scope, channels, ratio, rng):
    hidden = attention_width(channels, ratio)
    init_conv(scope, "fc1", channels, hidden, 1, rng)
    init_conv(scope, "fc2", hidden, channels, 1, rng)


def channel_attention(x, scope):
    """Squeeze-excitation weights in (0, 1), shape (N, C, 1, 1)."""
    s = F.global_avg_pool(x)
    s = F.relu(conv(s, scope, "fc1", padding=0))
    return F.sigmoid(conv(s, scope, "fc2", padding=0))
