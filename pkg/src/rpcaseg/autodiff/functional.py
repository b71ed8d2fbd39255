"""Differentiable operations.

Every function accepts :class:`Tensor` arguments (Python scalars are allowed
where noted), computes the forward value with numpy and, when any input
requires a gradient and a tape is active, records a backward closure.
"""

import numpy as np
from scipy.special import expit

from ..errors import DimensionError
from .tensor import Tensor, as_tensor, current_tape

__all__ = [
    "add", "sub", "mul", "div", "neg", "relu", "sigmoid", "tanh", "sum",
    "mean", "conv2d", "batch_norm", "channel_slice", "global_avg_pool",
]

# Kernels with at least this many taps use the FFT path when stride is 1.
FFT_MIN_TAPS = 49


def _op(data, inputs, backward):
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req)
    if req:
        tape = current_tape()
        if tape is not None:
            tape.record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _is_scalar(x):
    return not isinstance(x, Tensor) and np.ndim(x) == 0


# ---------------------------------------------------------------- elementwise

def add(a, b):
    if _is_scalar(b):
        a = as_tensor(a)
        return _op(a.data + b, (a,), lambda g: (g,))
    if _is_scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return (_unbroadcast(g, sa) if a.requires_grad else None,
                _unbroadcast(g, sb) if b.requires_grad else None)

    return _op(a.data + b.data, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _op(-a.data, (a,), lambda g: (-g,))


def sub(a, b):
    if _is_scalar(b):
        return add(a, -b)
    if _is_scalar(a):
        return add(neg(b), a)
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return (_unbroadcast(g, sa) if a.requires_grad else None,
                _unbroadcast(-g, sb) if b.requires_grad else None)

    return _op(a.data - b.data, (a, b), backward)


def mul(a, b):
    if _is_scalar(b):
        a = as_tensor(a)
        return _op(a.data * b, (a,), lambda g: (g * b,))
    if _is_scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _op(ad * bd, (a, b), backward)


def div(a, b):
    if _is_scalar(b):
        return mul(a, 1.0 / b)
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return _op(out, (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _op(np.maximum(x.data, 0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    y = expit(x.data)
    return _op(y, (x,), lambda g: (g * y * (1 - y),))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _op(y, (x,), lambda g: (g * (1 - y * y),))


# ----------------------------------------------------------------- reductions

def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _op(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if np.ndim(axis) == 0 else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def global_avg_pool(x):
    """Per-channel spatial mean, shape (N, C, 1, 1)."""
    return mean(x, axis=(2, 3), keepdims=True)


def channel_slice(x, start, stop):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[:, start:stop] = g
        return (out,)

    return _op(x.data[:, start:stop], (x,), backward)


# ---------------------------------------------------------------- convolution

def _check_conv(x, w, b, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise DimensionError(f"kernel expects {w.shape[1]} input channels, input has {x.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}")
    ho = (x.shape[2] + 2 * padding - w.shape[2]) // stride + 1
    wo = (x.shape[3] + 2 * padding - w.shape[3]) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"kernel {w.shape[2:]} larger than padded input {x.shape[2:]}")
    return ho, wo


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (O, C, kh, kw).

    Zero padding on all sides. Output spatial size is
    ``(H + 2 * padding - kh) // stride + 1``.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    ho, wo = _check_conv(x, w, b, stride, padding)
    kh, kw = w.shape[2:]
    if stride == 1 and kh * kw >= FFT_MIN_TAPS:
        out, backward = _conv_fft(x, w, padding, ho, wo)
    else:
        out, backward = _conv_cols(x, w, stride, padding, ho, wo)
    inputs = (x, w)
    if b is not None:
        out += b.data[None, :, None, None]
        inputs = (x, w, b)
        conv_backward = backward

        def backward(g):
            gx, gw = conv_backward(g)
            gb = g.sum(axis=(0, 2, 3)) if b.requires_grad else None
            return gx, gw, gb

    return _op(out, inputs, backward)


def _im2col(xc, kh, kw, stride, ho, wo):
    """Columns (C*kh*kw, N*Ho*Wo) from a padded (C, N, Hp, Wp) array."""
    c, n = xc.shape[:2]
    s = stride
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xc.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xc[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
    return cols.reshape(c * kh * kw, n * ho * wo)


def _pad_cnhw(x, ph, pw=None):
    """(N, C, H, W) -> zero-padded (C, N, H + 2ph, W + 2pw)."""
    pw = ph if pw is None else pw
    n, c, h, w = x.shape
    xc = np.zeros((c, n, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xc[:, :, ph:ph + h, pw:pw + w] = x.transpose(1, 0, 2, 3)
    return xc


def _conv_cols(x, w, stride, padding, ho, wo):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    p, s = padding, stride
    if kh == kw == 1 and p == 0 and s == 1:
        cols = x.data.transpose(1, 0, 2, 3).reshape(c, n * h * wd)
    else:
        cols = _im2col(_pad_cnhw(x.data, p), kh, kw, s, ho, wo)
    wm = w.data.reshape(o, c * kh * kw)
    out = (wm @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3).copy()

    def backward(g):
        gm = g.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)
        gw = gx = None
        if w.requires_grad:
            gw = (gm @ cols.T).reshape(w.shape)
        if x.requires_grad:
            if s == 1 and p <= min(kh, kw) - 1:
                # Input gradient as a full correlation of g with the flipped kernel.
                gcols = _im2col(_pad_cnhw(g, kh - 1 - p, kw - 1 - p), kh, kw, 1, h, wd)
                wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, o * kh * kw)
                gx = (wflip @ gcols).reshape(c, n, h, wd).transpose(1, 0, 2, 3).copy()
            else:
                dcols = (wm.T @ gm).reshape(c, kh, kw, n, ho, wo)
                dxp = np.zeros((c, n, h + 2 * p, wd + 2 * p), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dcols[:, i, j]
                gx = dxp[:, :, p:p + h, p:p + wd].transpose(1, 0, 2, 3).copy()
        return gx, gw

    return out, backward


def _conv_fft(x, w, padding, ho, wo):
    # Circular correlation over the padded grid is exact here: every lag the
    # output needs stays inside the grid, so nothing wraps around.
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    p = padding
    size = (h + 2 * p, wd + 2 * p)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    xf = np.fft.rfft2(xp)
    wf = np.fft.rfft2(w.data, s=size)
    yf = np.matmul(xf.transpose(2, 3, 0, 1), np.conj(wf).transpose(2, 3, 1, 0))
    out = np.fft.irfft2(yf.transpose(2, 3, 0, 1), s=size)[:, :, :ho, :wo]
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        gf = np.fft.rfft2(g, s=size).transpose(2, 3, 0, 1)
        gx = gw = None
        if x.requires_grad:
            dxf = np.matmul(gf, wf.transpose(2, 3, 0, 1))
            dxp = np.fft.irfft2(dxf.transpose(2, 3, 0, 1), s=size)
            gx = np.ascontiguousarray(dxp[:, :, p:p + h, p:p + wd], dtype=g.dtype)
        if w.requires_grad:
            dwf = np.matmul(np.conj(gf).swapaxes(2, 3), xf.transpose(2, 3, 0, 1))
            dw = np.fft.irfft2(dwf.transpose(2, 3, 0, 1), s=size)
            gw = np.ascontiguousarray(dw[:, :, :kh, :kw], dtype=g.dtype)
        return gx, gw

    return out, backward


# ---------------------------------------------------------------- batch norm

def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Per-channel batch normalisation over (N, H, W).

    ``running_mean`` / ``running_var`` are plain arrays updated in place in
    training mode; they never receive gradients.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batch_norm shape mismatch: x {x.shape}, scale {gamma.shape}, shift {beta.shape}")
    axes = (0, 2, 3)
    gd = gamma.data[None, :, None, None]
    xd = x.data
    if training:
        count = xd.shape[0] * xd.shape[2] * xd.shape[3]
        if count < 2:
            raise DimensionError("batch_norm in train mode needs at least two values per channel")
        mu = xd.mean(axis=axes)
        xc = xd - mu[None, :, None, None]
        var = np.mean(xc * xc, axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv[None, :, None, None]
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (count / (count - 1))
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (xd - running_mean[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gd + beta.data[None, :, None, None]
    inv4 = inv[None, :, None, None]

    def backward(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gd
            if training:
                gx = inv4 * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                             - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
            else:
                gx = dxhat * inv4
        return gx, gg, gb

    return _op(out, (x, gamma, beta), backward)
