"""Pixel, target-level and ROC metrics on hand-made masks."""

import numpy as np

from rpcaseg.metrics import pixel_metrics, roc_auc, singular_spectrum, sparsity_rate, target_metrics

gt = np.zeros((10, 10), bool)
gt[1:3, 1:3] = True      # a 2x2 target
gt[8, 8] = True          # a single-pixel target, missed below
pred = np.zeros_like(gt)
pred[1:3, 1:3] = True
pred[5, 0:3] = True      # a false alarm

print("pixel:", pixel_metrics(pred, gt))
print("target:", target_metrics(pred, gt))

# AUC sweeps thresholds over a probability map.
prob = np.where(gt, 0.8, 0.1) + np.random.default_rng(0).uniform(0, 0.15, gt.shape)
print("AUC:", roc_auc(prob, gt)["AUC"])

# Interpretability measures on a rank-1 matrix and a sparse map.
s, cum = singular_spectrum(np.ones((4, 4)))
print("spectrum of all-ones:", s, "cumulative energy:", cum)
print("sparsity rate of pred:", sparsity_rate(pred.astype(float)))
