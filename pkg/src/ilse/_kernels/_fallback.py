"""Pure-numpy edge aggregation, the fallback when the compiled module is absent.

Accumulation runs over neighbor positions (node 0's first neighbor, second
neighbor, ...), which is the same per-node, ascending-edge order the compiled
kernel uses, so both backends produce bit-identical sums. The CSR structure
is padded once to a rectangular (node, position) index matrix; missing
positions point at a zero row with weight 0.
"""

from __future__ import annotations

import numpy as np

_PAD_CACHE: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}


def _padded_structure(indptr: np.ndarray, indices: np.ndarray, weights: np.ndarray | None):
    key = indptr.tobytes() + indices.tobytes() + (b"" if weights is None else weights.tobytes())
    hit = _PAD_CACHE.get(key)
    if hit is not None:
        return hit
    n = indptr.shape[0] - 1
    deg = np.diff(indptr)
    width = int(deg.max()) if n else 0
    idx = np.full((n, width), n, dtype=np.int64)  # row n is the zero pad row
    wmat = np.zeros((n, width))
    mask = np.arange(width)[None, :] < deg[:, None]
    idx[mask] = indices  # CSR payload is row-major, like the mask
    wmat[mask] = 1.0 if weights is None else weights
    _PAD_CACHE[key] = (idx, wmat)
    return idx, wmat


def edge_gather_sum(
    h: np.ndarray,
    indptr: np.ndarray,
    indices: np.ndarray,
    weights: np.ndarray | None,
    out: np.ndarray,
) -> np.ndarray:
    """out[b, v, :] = sum over edges e of node v of weights[e] * h[b, indices[e], :].

    ``h`` is (B, N, w) float64, ``out`` same shape; ``indptr``/``indices`` are a
    CSR neighbor structure with ascending indices per node.
    """
    out[...] = 0.0
    if indices.shape[0] == 0:
        return out
    idx, wmat = _padded_structure(indptr, indices, weights)
    hpad = np.concatenate([h, np.zeros((h.shape[0], 1, h.shape[2]))], axis=1)
    for k in range(idx.shape[1]):
        out += wmat[None, :, k, None] * hpad[:, idx[:, k], :]
    return out
