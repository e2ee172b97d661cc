#!/usr/bin/env python3
"""Benchmark the compiled edge-aggregation kernel against the numpy fallback.

The aggregation dominates graph-encoder step time once node count and width
grow, which is why the package ships the Cython kernel at all. Run:

    python benchmarks/bench_kernels.py

Both backends produce bit-identical output (asserted here on every case).
"""

import time

import numpy as np

from ilse._kernels import _fallback
from ilse.cayley import build_cayley
from ilse.encoders import GraphStructure

try:
    from ilse._kernels import _edgeops
except ImportError:
    _edgeops = None


def bench(fn, h, indptr, indices, weights, repeats):
    out = np.empty_like(h)
    fn(h, indptr, indices, weights, out)  # warm up (and fill caches)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(h, indptr, indices, weights, out)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    rng = np.random.default_rng(0)
    cases = []
    for n, batch, width in ((3, 64, 256), (4, 64, 256), (5, 64, 256), (7, 128, 256), (10, 128, 512)):
        graph = build_cayley(n)
        structure = GraphStructure.from_cayley(graph)
        label = f"cayley n={n} ({graph.node_count} nodes) B={batch} w={width}"
        cases.append((label, structure.indptr, structure.indices, None, batch, width))
        gi, gx, gw = structure.gcn_csr()
        cases.append((label + " weighted", gi, gx, gw, batch, width))

    print(f"{'case':<44} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for label, indptr, indices, weights, batch, width in cases:
        h = np.ascontiguousarray(rng.standard_normal((batch, indptr.shape[0] - 1, width)))
        repeats = max(3, int(2e7 / h.size))
        t_np, out_np = bench(_fallback.edge_gather_sum, h, indptr, indices, weights, repeats)
        if _edgeops is None:
            print(f"{label:<44} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            continue
        t_cy, out_cy = bench(_edgeops.edge_gather_sum, h, indptr, indices, weights, repeats)
        assert np.array_equal(out_np, out_cy), f"backend mismatch on {label}"
        print(f"{label:<44} {t_np * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms {t_np / t_cy:>7.1f}x")
    if _edgeops is None:
        print("\ncompiled kernel not built; numpy fallback only")


if __name__ == "__main__":
    main()
