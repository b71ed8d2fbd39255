"""Robust-PCA sparse object segmentation: classical solvers, a deep
unfolded network and the evaluation metrics around them."""

__version__ = "0.1.0"
