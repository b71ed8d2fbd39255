"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"RPCX"  u32 version
    u32 config length, UTF-8 config text
    u32 tensor count
    per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 data
    u32 CRC32 of every preceding byte

Parameters and batch-norm running statistics are both stored as tensors,
in sorted name order. Values are written as float32 whatever the compute
precision.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"RPCX"
VERSION = 1


def encode(config_text, tensors):
    """Serialise ``tensors`` (name -> array) with the given config text."""
    cfg = config_text.encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg)), cfg,
             struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} cannot be encoded")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), arr.astype("<f4").tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data, origin):
        self.data, self.pos, self.origin = data, 0, origin

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.origin}: truncated checkpoint at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data, origin="<bytes>"):
    """Return ``(config_text, tensors)``; raises :class:`FormatError` on any corruption."""
    if len(data) < 4 + 4 + 4 + 4 + 4:
        raise FormatError(f"{origin}: file too short for a checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError(f"{origin}: CRC mismatch")
    r = _Reader(body, origin)
    if r.take(4) != MAGIC:
        raise FormatError(f"{origin}: bad magic")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"{origin}: unsupported checkpoint version {version}")
    (cfg_len,) = r.unpack("<I")
    try:
        config_text = r.take(cfg_len).decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError(f"{origin}: config block is not UTF-8") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8", errors="strict")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims)
        if name in tensors:
            raise FormatError(f"{origin}: duplicate tensor {name!r}")
        tensors[name] = arr.astype(np.float32)
    if r.pos != len(body):
        raise FormatError(f"{origin}: {len(body) - r.pos} trailing bytes")
    return config_text, tensors


def save_checkpoint(path, config_text, tensors):
    data = encode(config_text, tensors)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)
    return data


def load_checkpoint(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    return decode(data, str(path))
