"""Versioned binary checkpoint files (see docs/checkpoint-format.md).

Layout, all integers little-endian:
  magic   8 bytes  b"TNET0001"
  u32     metadata length
  bytes   metadata (UTF-8 JSON)
  u32     array count
  per array:
    u16   name length, then name (UTF-8)
    u8    dtype code (0 = float32, 1 = float64)
    u8    ndim
    u64 * ndim  dims
    raw   row-major data
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TNET0001"

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, array in arrays.items():
            code = _CODES.get(np.dtype(array.dtype))
            if code is None:
                raise CheckpointError(f"array {name!r}: unsupported dtype {array.dtype}")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", code, array.ndim))
            for dim in array.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            if code not in _DTYPES:
                raise CheckpointError(f"array {name!r}: unknown dtype code {code}")
            dims = [struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim)]
            dtype = _DTYPES[code]
            n_bytes = int(np.prod(dims)) * dtype.itemsize if dims else dtype.itemsize
            if not dims:
                n_bytes = dtype.itemsize
            data = np.frombuffer(fh.read(n_bytes), dtype=dtype)
            arrays[name] = data.reshape(dims).copy()
    return arrays, meta
