"""Tensor container and the reverse-mode gradient tape.

Operations in :mod:`rpcaseg.autodiff.functional` record themselves on the
innermost active :class:`Tape`. Outside a tape nothing is recorded, which is
how inference runs.
"""

import threading

import numpy as np

from ..errors import NonFiniteError

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A numpy array with an optional gradient buffer.

    Network activations are N x C x H x W, but parameters (biases, the per
    stage step size) and reductions have other ranks, so the rank is not
    enforced here; the layer functions check what they need.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # Arithmetic dispatches to the functional layer; imported lazily to
    # avoid a circular import.
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from . import functional as F
        return F.div(other, self)

    def __neg__(self):
        from . import functional as F
        return F.neg(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


class Tape:
    """Ordered record of differentiable operations.

    Records are appended as operations execute, so they are already in
    topological order; :meth:`backward` replays them in reverse and
    accumulates gradients additively.

    >>> import numpy as np
    >>> from rpcaseg.autodiff import functional as F
    >>> x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    >>> with Tape() as tape:
    ...     y = F.sum(x * x)
    >>> tape.backward(y)
    >>> x.grad
    array([ 2., -4.])
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, inputs, backward):
        self.records.append((out, inputs, backward))

    def backward(self, root, seed=None):
        """Propagate d(root) to every leaf reachable on this tape.

        Leaf gradients are added to ``Tensor.grad`` (accumulating across
        calls until ``zero_grad``). ``seed`` defaults to ones.
        """
        if seed is None:
            seed = np.ones_like(root.data)
        grads = {id(root): np.asarray(seed, dtype=root.data.dtype)}
        owners = {id(root): root}
        for out, inputs, fn in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            owners.pop(id(out), None)
            for t, gi in zip(inputs, fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    owners[key] = t
        for key, g in grads.items():
            t = owners[key]
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient reached {t.name or 'unnamed tensor'}")
            g = np.array(np.broadcast_to(g, t.data.shape))
            t.grad = g if t.grad is None else t.grad + g
