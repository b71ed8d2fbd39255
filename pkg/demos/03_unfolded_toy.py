"""Train the unfolded network on a few synthetic images and look inside it.

Kept short (10 epochs, 40 images at 24 px) so it runs in about a minute;
`rpcaseg train` with the default schedule does the full toy run.
"""

import numpy as np

from rpcaseg.interpret import analyse
from rpcaseg.io.synth import SynthParams, generate
from rpcaseg.unfolded import NetConfig, TrainSchedule, predict, train

images, masks = generate(0, 40, SynthParams(size=24))
x_train, y_train = images[:32], masks[:32]
x_test, y_test = images[32:], masks[32:]

cfg = NetConfig(stages=3, channels=4)
result = train(x_train, y_train, cfg, TrainSchedule(epochs=10, batch_size=8, seed=0))
print("loss per epoch:", " ".join(f"{v:.3f}" for v in result.loss_trace))

stages, prob = predict(x_test[:, None].astype(np.float32), cfg, result.params)
print("stage outputs:", [tuple(s.B.shape) for s in stages], "probability map", prob.shape)

a = analyse(x_test, y_test, cfg, result.params)
print("median top-5 energy share of B per stage:", np.round(a.median_top_share(), 4))
print("median sparsity rate of O per stage:    ", np.round(a.median_sparsity(), 4))
print("test IoU after 10 epochs:", a.metrics["aggregate"]["IoU"])
