"""Adam with externally supplied learning rate, plus the polynomial decay."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError


def poly_lr(base_lr, iteration, total_iterations, power=0.9):
    """``base_lr * (1 - iteration / total_iterations) ** power``."""
    if total_iterations <= 0:
        return base_lr
    frac = min(max(iteration / total_iterations, 0.0), 1.0)
    return base_lr * (1.0 - frac) ** power


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """Apply one Adam update in place.

    ``params`` maps names to tensors, ``grads`` maps the same names to
    gradient arrays (missing or ``None`` means no update for that entry).
    Raises :class:`NonFiniteError` naming the first offending parameter.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype, copy=False)
    return params
