"""Grayscale image I/O: PGM (P2/P5), PNG, and a raw float dump format."""

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import DataError, FormatError

LUMA = (0.299, 0.587, 0.114)
RAW_MAGIC = b"RPCF"


def _read_pgm(data, path):
    magic = data[:2]
    tokens, pos = [], 2
    # Header: width, height, maxval, separated by whitespace and # comments.
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 65535:
        raise FormatError(f"{path}: unsupported PGM dimensions or maxval {maxval}")
    if magic == b"P2":
        try:
            values = np.array([int(t) for t in data[pos:].split()], dtype=np.int64)
        except ValueError:
            raise FormatError(f"{path}: non-integer PGM sample") from None
    else:
        pos += 1  # single whitespace byte after maxval
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        values = np.frombuffer(data, dtype=dt, count=min(w * h, (len(data) - pos) // dt.itemsize),
                               offset=pos).astype(np.int64)
    if values.size != w * h:
        raise FormatError(f"{path}: expected {w * h} PGM samples, found {values.size}")
    if values.min() < 0 or values.max() > maxval:
        raise FormatError(f"{path}: PGM sample outside [0, {maxval}]")
    return values.reshape(h, w) / maxval


def load_image(path):
    """Grayscale image in [0, 1] as a float64 (H, W) array.

    RGB input is collapsed with luma weights 0.299/0.587/0.114.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data, path)
    if data[:4] == RAW_MAGIC:
        return load_raw(path)
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise FormatError(f"{path}: unsupported image format {img.format}; expected PGM or PNG")
            img.load()
            if img.mode in ("P", "RGBA"):
                img = img.convert("RGB")
            elif img.mode == "LA":
                img = img.convert("L")
            mode = img.mode
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: unsupported image format ({exc})") from None
    if mode == "L":
        return arr.astype(np.float64) / 255.0
    if mode in ("I;16", "I;16B", "I;16L"):
        return arr.astype(np.float64) / 65535.0
    if mode == "RGB":
        rgb = arr.astype(np.float64) / 255.0
        return rgb @ np.array(LUMA)
    raise FormatError(f"{path}: unsupported image mode {mode!r}")


def to_uint8(img):
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, img):
    """Save an (H, W) array in [0, 1] as 8-bit grayscale PNG or binary PGM."""
    path = Path(path)
    img = np.asarray(img)
    if img.ndim != 2:
        raise DataError(f"expected a 2-d image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise DataError(f"refusing to save non-finite values to {path}")
    q = to_uint8(img)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".pgm":
        h, w = q.shape
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + q.tobytes())
    else:
        Image.fromarray(q, mode="L").save(path, format="PNG")


def normalize_minmax(img):
    """Per-image min-max scaling to [0, 1]; a constant image maps to zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def save_raw(path, arr):
    """Flat binary dump: b"RPCF", u32 rank, u32 dims, f32 LE values."""
    arr = np.asarray(arr)
    header = RAW_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes())


def load_raw(path):
    data = Path(path).read_bytes()
    if data[:4] != RAW_MAGIC or len(data) < 8:
        raise FormatError(f"{path}: not a raw float dump")
    (rank,) = struct.unpack_from("<I", data, 4)
    if len(data) < 8 + 4 * rank:
        raise FormatError(f"{path}: truncated raw header")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    off = 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    if len(data) - off != 4 * count:
        raise FormatError(f"{path}: expected {count} float32 values, found {(len(data) - off) // 4}")
    return np.frombuffer(data, dtype="<f4", offset=off).reshape(dims).astype(np.float64)
