"""Synthetic small-target scenes: smooth low-rank background plus Gaussian blobs.

Each background is a sum of at most ``rank_max`` outer products of smooth,
strictly positive 1-D profiles, scaled so its maximum is 0.8. Targets are
isotropic Gaussian bumps added on top; a target's mask is the set of pixels
where the bump reaches half its amplitude.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import UsageError
from .images import save_image

BACKGROUND_MAX = 0.8


@dataclass(frozen=True)
class SynthParams:
    size: int = 32
    rank_max: int = 3
    blob_count_range: tuple = (1, 3)
    blob_sigma_range: tuple = (0.8, 1.6)
    amplitude_range: tuple = (0.2, 1.0)
    noise_std: float = 0.02

    def __post_init__(self):
        if self.size < 16:
            raise UsageError(f"size must be >= 16, got {self.size}")
        if self.rank_max < 1:
            raise UsageError(f"rank_max must be >= 1, got {self.rank_max}")
        lo, hi = self.blob_count_range
        if lo < 0 or hi < lo:
            raise UsageError(f"bad blob_count_range {self.blob_count_range}")
        slo, shi = self.blob_sigma_range
        if slo <= 0 or shi < slo:
            raise UsageError(f"bad blob_sigma_range {self.blob_sigma_range}")
        if self.noise_std < 0:
            raise UsageError("noise_std must be >= 0")


def _profile(rng, n):
    # A few low-frequency cosines on top of a positive offset.
    t = np.linspace(0.0, 1.0, n)
    p = 1.0 + rng.uniform(0.0, 0.5)
    for freq in range(1, 4):
        p = p + rng.uniform(-0.3, 0.3) / freq * np.cos(np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    return p


def background(rng, size, rank_max):
    rank = int(rng.integers(1, rank_max + 1))
    bg = np.zeros((size, size))
    for _ in range(rank):
        bg += rng.uniform(0.3, 1.0) * np.outer(_profile(rng, size), _profile(rng, size))
    return bg * (BACKGROUND_MAX / bg.max())


def blobs(rng, size, params):
    """Return (target image, mask) for a random number of Gaussian blobs."""
    lo, hi = params.blob_count_range
    count = int(rng.integers(lo, hi + 1))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(count):
        sigma = rng.uniform(*params.blob_sigma_range)
        amp = rng.uniform(*params.amplitude_range)
        margin = 2.0 * sigma
        cy, cx = rng.uniform(margin, size - 1 - margin, size=2)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
        img += amp * bump
        mask |= bump >= 0.5
    return img, mask


def generate_sample(rng, params=SynthParams()):
    """One ``(image, mask)`` pair; the image is clipped to [0, 1]."""
    bg = background(rng, params.size, params.rank_max)
    tgt, mask = blobs(rng, params.size, params)
    img = bg + tgt
    if params.noise_std > 0:
        img = img + rng.normal(0.0, params.noise_std, img.shape)
    return np.clip(img, 0.0, 1.0), mask.astype(np.float64)


def generate(seed, count, params=SynthParams()):
    """``count`` samples as arrays ``(images, masks)`` of shape (count, size, size)."""
    rng = np.random.default_rng(seed)
    images = np.empty((count, params.size, params.size))
    masks = np.empty_like(images)
    for i in range(count):
        images[i], masks[i] = generate_sample(rng, params)
    return images, masks


def synth_generate(seed, count, out_dir, params=SynthParams(), test_fraction=0.2):
    """Write PNG images, masks and a ``manifest.json`` under ``out_dir``.

    The last ``round(count * test_fraction)`` samples are tagged ``test``.
    Returns the manifest path.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    images, masks = generate(seed, count, params)
    n_test = int(round(count * test_fraction))
    items = []
    for i in range(count):
        name = f"{i:05d}.png"
        save_image(out / "images" / name, images[i])
        save_image(out / "masks" / name, masks[i])
        items.append({"image": f"images/{name}", "mask": f"masks/{name}",
                      "split": "test" if i >= count - n_test else "train"})
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"resize": None, "items": items}, indent=1) + "\n")
    return manifest
