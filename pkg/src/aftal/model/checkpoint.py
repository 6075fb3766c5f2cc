"""Versioned binary checkpoint container.

Layout (all integers little endian):

    magic   4 bytes  b"AFTC"
    version u16      currently 1
    count   u32      number of parameters
    entry * count:
        name_len u16, name utf-8 bytes
        dtype    u8   (0 = float32, 1 = float64)
        ndim     u8, dims u32 * ndim
        payload  row-major little-endian values

Entries are written in sorted name order so identical parameter sets
serialize byte-identically.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..tensorcore import Tensor

MAGIC = b"AFTC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: dict[str, Tensor]) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name in sorted(params):
        data = params[name].data
        code = _DTYPE_CODES.get(data.dtype)
        if code is None:
            raise CheckpointError(f"unsupported dtype {data.dtype} for {name}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype=_DTYPES[code]).tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 10
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", raw, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        dtype = _DTYPES.get(code)
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype code {code}")
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        arr = np.frombuffer(raw[offset:offset + n_bytes], dtype=dtype).reshape(shape)
        offset += n_bytes
        out[name] = arr.copy()
    return out


def restore_into(params: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(f"parameter mismatch: missing={missing}, extra={extra}")
    for name, tensor in params.items():
        arr = arrays[name]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(f"shape mismatch for {name}: {arr.shape} vs {tensor.data.shape}")
        tensor.data = arr.astype(tensor.data.dtype, copy=True)
