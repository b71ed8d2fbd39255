"""The three per-stage blocks: background approximation (with the ConvLSTM
memory), object extraction (with the contrast prior) and image restoration.

Feature maps inside a block have ``C = config.channels`` channels; the
blocks themselves map single-channel images to single-channel images.
"""

import numpy as np

from ..autodiff import functional as F
from ..autodiff.layers import (channel_attention, conv, conv_bn_relu,
                               conv_lstm_cell, init_channel_attention,
                               init_conv_bn, init_conv_lstm,
                               init_residual_block, residual_block)
from ..autodiff.params import init_conv
from ..autodiff.tensor import Tensor
from ..errors import DimensionError

RHO_INIT = 0.1


def _check_image(name, t):
    if t.ndim != 4 or t.shape[1] != 1:
        raise DimensionError(f"{name} must be (N, 1, H, W), got {t.shape}")


# -------------------------------------------------------------------- BAM

def init_bam(scope, cfg, rng):
    c, k = cfg.channels, 3
    init_conv_bn(scope, "conv_b1", 1, c, k, rng)
    init_residual_block(scope.child("rb1"), c, k, rng)
    if cfg.mam_enabled:
        init_conv_lstm(scope.child("mam"), c, c, cfg.lstm_kernel, rng)
    init_residual_block(scope.child("rb2"), c, k, rng)
    init_conv(scope, "conv_b2", c, 1, k, rng)


def bam_forward(d_prev, o_prev, h_prev, c_prev, scope, cfg, training=False):
    """Background estimate ``B = (D - O) + ConvB2(RB2(MAM(RB1(ConvB1(D - O)))))``.

    Returns ``(B, h, c)`` where ``h, c`` is the memory passed to the next
    stage. With the memory disabled the LSTM is skipped and zero memory is
    passed through.
    """
    _check_image("D", d_prev)
    _check_image("O", o_prev)
    if d_prev.shape != o_prev.shape:
        raise DimensionError(f"D {d_prev.shape} and O {o_prev.shape} differ")
    x = d_prev - o_prev
    f = conv_bn_relu(x, scope, "conv_b1", training)
    f = residual_block(f, scope.child("rb1"), training)
    if cfg.mam_enabled:
        h, c = conv_lstm_cell(f, h_prev, c_prev, scope.child("mam"))
        f = h
    else:
        h, c = h_prev, c_prev
    f = residual_block(f, scope.child("rb2"), training)
    return x + conv(f, scope, "conv_b2"), h, c


# ------------------------------------------------------------------- DCPM

def init_dcpm(scope, cfg, rng):
    c, s = cfg.channels, cfg.dcpm_kernel
    init_conv(scope, "conv_t1", 1, c, 3, rng)
    init_conv(scope, "p_o", c, c, s, rng, bias=False)
    init_channel_attention(scope.child("att"), c, cfg.se_ratio, rng)
    init_conv(scope, "conv_t2", c, 1, 3, rng)


def contrast_prior(feat, scope, theta=None):
    """Central-difference response ``theta * P_s(X) - P_o(X)``.

    ``P_o`` is the full s x s convolution; ``P_s`` applies the sum of each
    ``P_o`` filter as a 1x1 convolution, so on a constant patch the two cancel
    when ``theta == 1``. ``theta`` defaults to the channel attention of
    ``feat``; pass a number or tensor to override it.
    """
    w = scope["p_o.weight"]
    centre = F.sum(w, axis=(2, 3), keepdims=True)
    p_s = F.conv2d(feat, centre, None, padding=0)
    p_o = F.conv2d(feat, w, None, padding=w.shape[2] // 2)
    if theta is None:
        theta = channel_attention(feat, scope.child("att"))
    return theta * p_s - p_o


def dcpm_forward(x, scope, cfg, theta=None):
    """Prior map ``W = ConvT2(P(ConvT1(X)))``."""
    _check_image("X", x)
    feat = conv(x, scope, "conv_t1")
    return conv(contrast_prior(feat, scope, theta), scope, "conv_t2")


# -------------------------------------------------------------------- OEM

def init_oem(scope, cfg, rng):
    c = cfg.channels
    if cfg.dcpm_enabled:
        init_dcpm(scope.child("dcpm"), cfg, rng)
    g = scope.child("g")
    init_conv(g, "0", 1, c, 3, rng)
    for i in range(1, cfg.oem_layers + 1):
        init_conv(g, str(i), c, c, 3, rng)
    init_conv(g, str(cfg.oem_layers + 1), c, 1, 3, rng)
    scope.store.add_param(scope._full("rho"), np.array(RHO_INIT))


def sparse_gradient_net(x, scope, cfg):
    """The learned gradient of the sparsity term: [Conv+ReLU] x (l_O + 1), Conv."""
    y = x
    for i in range(cfg.oem_layers + 1):
        y = F.relu(conv(y, scope, str(i)))
    return conv(y, scope, str(cfg.oem_layers + 1))


def oem_forward(o_prev, d_prev, b, rho, scope, cfg):
    """Object update ``O = X - rho * G(X + W)`` with ``X = O_prev + D_prev - B``."""
    for name, t in (("O", o_prev), ("D", d_prev), ("B", b)):
        _check_image(name, t)
    if not (o_prev.shape == d_prev.shape == b.shape):
        raise DimensionError(f"OEM inputs differ in shape: {o_prev.shape}, {d_prev.shape}, {b.shape}")
    x = o_prev + d_prev - b
    g_in = x + dcpm_forward(x, scope.child("dcpm"), cfg) if cfg.dcpm_enabled else x
    return x - rho * sparse_gradient_net(g_in, scope.child("g"), cfg)


# -------------------------------------------------------------------- IRM

def init_irm(scope, cfg, rng):
    c = cfg.channels
    init_conv(scope, "head", 1, c, 3, rng)
    for i in range(cfg.irm_layers):
        init_conv_bn(scope, f"block{i}", c, c, 3, rng)
    init_conv(scope, "tail", c, 1, 3, rng)


def irm_forward(b, o, scope, cfg, training=False):
    """Restoration ``D = M(B + O)``: [Conv+ReLU], l_D x [Conv+BN+ReLU], [Conv]."""
    _check_image("B", b)
    if b.shape != o.shape:
        raise DimensionError(f"B {b.shape} and O {o.shape} differ")
    y = F.relu(conv(b + o, scope, "head"))
    for i in range(cfg.irm_layers):
        y = conv_bn_relu(y, scope, f"block{i}", training)
    return conv(y, scope, "tail")


def zeros_like_features(image, cfg):
    n, _, h, w = image.shape
    return Tensor(np.zeros((n, cfg.channels, h, w), dtype=image.dtype))
