"""Parameter checkpoint file.

Layout (little-endian throughout):
    magic   8 bytes  b"ILSECKPT"
    version u32      currently 1
    records, one per parameter, in store order:
        name_len u32, name utf-8 bytes,
        rank u32, dims u32 each,
        payload float64 row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"ILSECKPT"
VERSION = 1


def save_params(arrays: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad checkpoint magic", offset=0)
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, pos)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=pos)
    pos += 4
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise FormatError("truncated record header", offset=pos)
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + name_len + 4 > len(blob):
            raise FormatError("truncated record name", offset=pos)
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + 4 * rank > len(blob):
            raise FormatError("truncated shape", offset=pos)
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        nbytes = count * 8
        if pos + nbytes > len(blob):
            raise FormatError("truncated payload", offset=pos)
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        out[name] = arr.astype(np.float64, copy=True)
        pos += nbytes
    return out
