"""Bit-exact binary tensor container.

Layout (all integers little-endian):

    magic   4 bytes  b"ADRT"
    version u16      currently 1
    count   u32      number of entries
    entry:  name_len u16, name UTF-8 bytes,
            rank u8, dims u32 * rank,
            dtype u8 (1 = float32 LE, 2 = float64 LE),
            payload: row-major raw values

Save followed by load returns bit-identical arrays; malformed files are
rejected with the byte offset of the fault, and truncated payloads report
expected versus actual byte counts.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"ADRT"
VERSION = 1

_TAG_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_KIND_TO_TAG = {"f4": 1, "f8": 2}


def _dtype_tag(arr: np.ndarray) -> int:
    key = f"{arr.dtype.kind}{arr.dtype.itemsize}"
    if key not in _KIND_TO_TAG:
        raise ValueError(f"container stores float32/float64 only, got {arr.dtype}")
    return _KIND_TO_TAG[key]


def save_container(path, tensors) -> None:
    """Write named tensors; ``tensors`` is a dict or (name, array) sequence."""
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("tensor names must be unique")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HI", VERSION, len(items))
    for name, arr in items:
        arr = np.asarray(arr)  # tobytes() below always emits C order
        tag = _dtype_tag(arr)
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        out += struct.pack("<B", tag)
        out += arr.astype(_TAG_TO_DTYPE[tag], copy=False).tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise ContainerFormatError(
                f"truncated {what}: expected {n} bytes, found {len(self.blob) - self.pos}",
                self.pos)
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_container(path) -> dict[str, np.ndarray]:
    """Read a container back; preserves entry order, validates every field."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported format version {version}", 4)
    (count,) = r.unpack("<I", "entry count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        if name in tensors:
            raise ContainerFormatError(f"duplicate tensor name {name!r}", r.pos)
        (rank,) = r.unpack("<B", "rank")
        dims = tuple(r.unpack(f"<{rank}I", "dims")) if rank else ()
        tag_offset = r.pos
        (tag,) = r.unpack("<B", "dtype tag")
        if tag not in _TAG_TO_DTYPE:
            raise ContainerFormatError(f"unknown dtype tag {tag}", tag_offset)
        dtype = _TAG_TO_DTYPE[tag]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = r.take(n_bytes, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    if r.pos != len(blob):
        raise ContainerFormatError(
            f"{len(blob) - r.pos} trailing bytes after the last entry", r.pos)
    return tensors
