"""Tape autodiff: build a small expression, backpropagate, check against
central differences."""

import numpy as np

from rpcaseg.autodiff import ParamStore, Tape, Tensor
from rpcaseg.autodiff import functional as F
from rpcaseg.autodiff.gradcheck import gradcheck
from rpcaseg.autodiff.layers import conv_lstm_cell, init_conv_lstm

rng = np.random.default_rng(0)

# A conv -> batch norm -> tanh chain on a 2-image batch.
x = Tensor(rng.normal(size=(2, 3, 8, 8)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.3, requires_grad=True)
b = Tensor(np.zeros(4), requires_grad=True)
gamma, beta = Tensor(np.ones(4), requires_grad=True), Tensor(np.zeros(4), requires_grad=True)
mean, var = np.zeros(4), np.ones(4)
probe = rng.normal(size=(2, 4, 8, 8))


def chain():
    y = F.conv2d(x, w, b, 1, 1)
    y = F.batch_norm(y, gamma, beta, mean.copy(), var.copy(), True)
    return F.sum(F.tanh(y) * probe)


with Tape() as tape:
    out = chain()
tape.backward(out)
print("output", float(out.data))
print("dL/dw norm", np.linalg.norm(w.grad))

for r in gradcheck(chain, [x, w, gamma, beta], max_entries=20, rng=rng, names=["x", "w", "gamma", "beta"]):
    print(f"{r.name:6s} max rel err {r.max_rel_error:.2e} over {r.checked} entries")

# One ConvLSTM step, the recurrent cell the network's background module uses.
store = ParamStore()
init_conv_lstm(store.scope("lstm"), 1, 2, 3, rng)
xt = Tensor(rng.normal(size=(1, 1, 6, 6)))
h0 = c0 = Tensor(np.zeros((1, 2, 6, 6)))
h1, c1 = conv_lstm_cell(xt, h0, c0, store.scope("lstm"))
print("ConvLSTM hidden", h1.shape, "cell", c1.shape)
