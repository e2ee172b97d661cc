"""LREP writer: the binary contract consumed by the encoder-training side.

Layout (little-endian):
    magic  4 bytes  b"LREP"
    u32    version (1)
    u8     task kind: 0 = classification, 1 = pair regression
    u32    L, u32 d, u32 K (0 for pair), u64 N
    then N records:
        classification: L*d float32, u32 label, u8 split tag
        pair:           2*L*d float32, float32 gold, u8 split tag
Split tags: 0 = train, 1 = validation, 2 = test.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LREP"
VERSION = 1
KIND_CLASSIFICATION = 0
KIND_PAIR = 1
SPLIT_TAGS = {"train": 0, "validation": 1, "test": 2}

_HEADER = struct.Struct("<4sIBIIIQ")


def _record_dtype(kind: int, L: int, d: int) -> np.dtype:
    if kind == KIND_CLASSIFICATION:
        return np.dtype([("stack", "<f4", (L, d)), ("label", "<u4"), ("split", "u1")])
    return np.dtype(
        [("stack_a", "<f4", (L, d)), ("stack_b", "<f4", (L, d)), ("gold", "<f4"), ("split", "u1")]
    )


def write_classification(path, stacks: np.ndarray, labels: np.ndarray, splits: np.ndarray, n_classes: int) -> None:
    n, L, d = stacks.shape
    rec = np.zeros(n, dtype=_record_dtype(KIND_CLASSIFICATION, L, d))
    rec["stack"] = stacks.astype("<f4")
    rec["label"] = labels.astype("<u4")
    rec["split"] = splits.astype("u1")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, KIND_CLASSIFICATION, L, d, n_classes, n))
        fh.write(rec.tobytes())


def write_pairs(path, stacks_a: np.ndarray, stacks_b: np.ndarray, gold: np.ndarray, splits: np.ndarray) -> None:
    n, L, d = stacks_a.shape
    rec = np.zeros(n, dtype=_record_dtype(KIND_PAIR, L, d))
    rec["stack_a"] = stacks_a.astype("<f4")
    rec["stack_b"] = stacks_b.astype("<f4")
    rec["gold"] = gold.astype("<f4")
    rec["split"] = splits.astype("u1")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, KIND_PAIR, L, d, 0, n))
        fh.write(rec.tobytes())
