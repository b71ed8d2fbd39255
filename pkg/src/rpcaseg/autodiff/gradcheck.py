"""Central finite-difference checks for tape gradients."""

from dataclasses import dataclass

import numpy as np

from .tensor import Tape


@dataclass
class GradCheckResult:
    name: str
    max_abs_error: float
    max_rel_error: float
    checked: int


def _scale_error(analytic, numeric):
    diff = np.max(np.abs(analytic - numeric)) if analytic.size else 0.0
    scale = max(np.max(np.abs(analytic)) if analytic.size else 0.0,
                np.max(np.abs(numeric)) if numeric.size else 0.0, 1e-12)
    return float(diff), float(diff / scale)


def gradcheck(fn, tensors, h=1e-4, max_entries=None, rng=None, names=None):
    """Compare tape gradients of the scalar ``fn()`` against central differences.

    Parameters
    ----------
    fn : callable
        Takes no arguments and rebuilds the scalar output from the current
        values of ``tensors``. It must be deterministic.
    tensors : sequence of Tensor
        Inputs whose gradients are checked; their ``data`` is perturbed in
        place and restored.
    max_entries : int, optional
        Check at most this many randomly chosen entries per tensor.

    The relative error of a tensor is ``max|analytic - numeric|`` divided by
    the larger of the two gradients' max-norms.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in tensors:
        t.grad = None
        # Perturbations go through a flat view, which needs contiguous data.
        if not t.data.flags.c_contiguous:
            t.data = t.data.copy()
    with Tape() as tape:
        out = fn()
    tape.backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    results = []
    for idx, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            picks = rng.choice(flat.size, size=max_entries, replace=False)
        else:
            picks = np.arange(flat.size)
        numeric = np.empty(len(picks))
        for n, i in enumerate(picks):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            numeric[n] = (f_plus - f_minus) / (2 * h)
        a = analytic[idx].reshape(-1)[picks]
        abs_err, rel_err = _scale_error(a, numeric)
        label = names[idx] if names else (t.name or f"input{idx}")
        results.append(GradCheckResult(label, abs_err, rel_err, len(picks)))
    return results
