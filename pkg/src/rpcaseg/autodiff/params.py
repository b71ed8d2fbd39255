"""Named parameter storage.

Parameters are :class:`Tensor` objects with ``requires_grad=True``; buffers
(batch-norm running statistics) are plain arrays that the optimiser never
sees. Names are dotted paths such as ``stage1.bam.rb1.conv1.weight`` and
double as checkpoint keys.
"""

import math

import numpy as np

from .tensor import Tensor


class ParamStore:
    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.buffers = {}

    def add_param(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def add_buffer(self, name, value):
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.array(value, dtype=self.dtype)
        return self.buffers[name]

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params or name in self.buffers

    def scope(self, prefix):
        return Scope(self, prefix)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def state_dict(self):
        """All parameters and buffers as ``{name: array}`` (no copies)."""
        out = {name: t.data for name, t in self.params.items()}
        out.update(self.buffers)
        return out

    def snapshot(self):
        return {name: arr.copy() for name, arr in self.state_dict().items()}

    def load_state_dict(self, state, strict=True):
        names = set(self.params) | set(self.buffers)
        if strict and set(state) != names:
            missing = sorted(names - set(state))
            extra = sorted(set(state) - names)
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, arr in state.items():
            target = self.params[name].data if name in self.params else self.buffers[name]
            if target.shape != np.shape(arr):
                raise KeyError(f"shape mismatch for {name}: {target.shape} vs {np.shape(arr)}")
            target[...] = arr

    def num_parameters(self):
        return sum(t.data.size for t in self.params.values())


class Scope:
    """A prefix view into a :class:`ParamStore`."""

    def __init__(self, store, prefix):
        self.store = store
        self.prefix = prefix

    def _full(self, name):
        return f"{self.prefix}.{name}" if self.prefix else name

    def __getitem__(self, name):
        return self.store.params[self._full(name)]

    def buffer(self, name):
        return self.store.buffers[self._full(name)]

    def child(self, name):
        return Scope(self.store, self._full(name))

    def has(self, name):
        return self._full(name) in self.store


# ------------------------------------------------------------- initialisers

def init_conv(scope, name, c_in, c_out, k, rng, bias=True):
    bound = math.sqrt(1.0 / (c_in * k * k))
    store = scope.store
    store.add_param(scope._full(f"{name}.weight"), rng.uniform(-bound, bound, (c_out, c_in, k, k)))
    if bias:
        store.add_param(scope._full(f"{name}.bias"), np.zeros(c_out))


def init_batch_norm(scope, name, channels):
    store = scope.store
    store.add_param(scope._full(f"{name}.weight"), np.ones(channels))
    store.add_param(scope._full(f"{name}.bias"), np.zeros(channels))
    store.add_buffer(scope._full(f"{name}.running_mean"), np.zeros(channels))
    store.add_buffer(scope._full(f"{name}.running_var"), np.ones(channels))
