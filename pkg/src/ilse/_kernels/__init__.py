"""Backend selection for the message-passing kernels.

Imports the compiled Cython extension when available, otherwise the numpy
fallback. ``ILSE_KERNEL=numpy`` or ``ILSE_KERNEL=cython`` forces a backend
(the latter raises if the extension was not built). Both backends produce
bit-identical results; the compiled one only exists because the edge
aggregation is the hot inner loop at realistic widths (see
benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os

from . import _fallback

__all__ = ["edge_gather_sum", "BACKEND", "available_backends"]

_forced = os.environ.get("ILSE_KERNEL", "").strip().lower()

try:
    from . import _edgeops  # compiled extension

    _have_compiled = True
except ImportError:
    _edgeops = None
    _have_compiled = False

if _forced == "numpy":
    BACKEND = "numpy"
elif _forced == "cython":
    if not _have_compiled:
        raise ImportError("ILSE_KERNEL=cython requested but the extension is not built")
    BACKEND = "cython"
elif _forced:
    raise ImportError(f"unknown ILSE_KERNEL value {_forced!r} (use 'cython' or 'numpy')")
else:
    BACKEND = "cython" if _have_compiled else "numpy"

edge_gather_sum = _edgeops.edge_gather_sum if BACKEND == "cython" else _fallback.edge_gather_sum


def available_backends() -> list[str]:
    backends = ["numpy"]
    if _have_compiled:
        backends.insert(0, "cython")
    return backends
