"""Dataset manifests: JSON listing image/mask pairs with a split tag.

::

    {"resize": null | [H, W],
     "items": [{"image": "images/0.png", "mask": "masks/0.png", "split": "train"}, ...]}

Relative paths resolve against the manifest's directory.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError
from .images import load_image

SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestItem:
    image: Path
    mask: Path
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    items: tuple
    resize: tuple = None
    root: Path = Path(".")

    def split(self, name):
        return [it for it in self.items if it.split == name]


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("items"), list):
        raise DataError(f"{path}: manifest needs an 'items' list")
    resize = doc.get("resize")
    if resize is not None:
        if (not isinstance(resize, list) or len(resize) != 2
                or not all(isinstance(v, int) and v > 0 for v in resize)):
            raise DataError(f"{path}: resize must be null or [H, W] positive integers")
        resize = tuple(resize)
    root = path.parent
    items = []
    for i, entry in enumerate(doc["items"]):
        if not isinstance(entry, dict) or not {"image", "mask"} <= set(entry):
            raise DataError(f"{path}: item {i} needs 'image' and 'mask'")
        split = entry.get("split", "train")
        if split not in SPLITS:
            raise DataError(f"{path}: item {i} has unknown split {split!r}")
        img, msk = root / entry["image"], root / entry["mask"]
        for p in (img, msk):
            if not p.is_file():
                raise DataError(f"{path}: item {i} references missing file {p}")
        items.append(ManifestItem(img, msk, split))
    return DatasetManifest(tuple(items), resize, root)


def _resize(img, shape, resample):
    h, w = shape
    pil = Image.fromarray(np.asarray(img, dtype=np.float32), mode="F")
    return np.asarray(pil.resize((w, h), resample=resample), dtype=np.float64)


def load_pair(item, resize=None):
    """``(image, mask)`` for one item; the mask is binarised at 0.5."""
    img = load_image(item.image)
    mask = load_image(item.mask)
    if resize is not None:
        img = np.clip(_resize(img, resize, Image.BILINEAR), 0.0, 1.0)
        mask = _resize(mask, resize, Image.NEAREST)
    if img.shape != mask.shape:
        raise DataError(f"{item.image} is {img.shape} but its mask is {mask.shape}")
    return img, (mask >= 0.5).astype(np.float64)


def load_split(manifest, split=None):
    """Stacked ``(images, masks, names)`` for the items of ``split`` (all when None)."""
    items = manifest.items if split is None else manifest.split(split)
    if not items:
        raise DataError(f"manifest has no {split or ''} items".replace("  ", " "))
    pairs = [load_pair(it, manifest.resize) for it in items]
    shapes = {p[0].shape for p in pairs}
    if len(shapes) != 1:
        raise DataError(f"images differ in size {sorted(shapes)}; set 'resize' in the manifest")
    images = np.stack([p[0] for p in pairs])
    masks = np.stack([p[1] for p in pairs])
    return images, masks, [it.image.name for it in items]
