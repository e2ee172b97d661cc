"""Cayley graphs over the special linear group SL(2, Z_n).

These 4-regular expander graphs are the propagation structure of the Cayley
encoder: sparse, connected, with diameter logarithmic in the node count. The
module builds them by breadth-first closure from the identity under a fixed
inverse-closed generator set, predicts their size exactly from the prime
factorization of n, and picks the smallest modulus whose group covers a given
layer count.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvariantViolation

# The two elementary matrices and their inverses: inverse-closed, generates
# SL(2, Z_n), and yields the standard 4-regular expander family. For n = 2
# the generators pairwise coincide, so degrees drop below 4 there.
_GENERATOR_PATTERN = (
    lambda n: (1, 1, 0, 1),
    lambda n: (1, n - 1, 0, 1),
    lambda n: (1, 0, 1, 1),
    lambda n: (1, 0, n - 1, 1),
)


@dataclass(frozen=True)
class GroupElement:
    """A 2x2 matrix (a b; c d) with entries mod n and determinant 1."""

    a: int
    b: int
    c: int
    d: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument(f"modulus must be positive, got {self.n}")
        for entry in (self.a, self.b, self.c, self.d):
            if not 0 <= entry < max(self.n, 1):
                raise InvalidArgument(f"entry {entry} not reduced modulo {self.n}")
        if (self.a * self.d - self.b * self.c) % self.n != 1 % self.n:
            raise InvalidArgument(
                f"determinant of {(self.a, self.b, self.c, self.d)} is not 1 mod {self.n}"
            )

    def key(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    def rmul(self, other: "GroupElement") -> "GroupElement":
        """Right-multiply by ``other`` and reduce mod n."""
        n = self.n
        return GroupElement(
            (self.a * other.a + self.b * other.c) % n,
            (self.a * other.b + self.b * other.d) % n,
            (self.c * other.a + self.d * other.c) % n,
            (self.c * other.b + self.d * other.d) % n,
            n,
        )


@dataclass
class CayleyGraph:
    """The Cayley graph of SL(2, Z_n): nodes in BFS discovery order,
    deduplicated symmetric adjacency, no self-loops."""

    n: int
    nodes: list[GroupElement]
    adjacency: list[list[int]]
    generators: list[GroupElement]
    _csr: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        """Number of undirected edges."""
        return sum(len(a) for a in self.adjacency) // 2

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    def degree_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for deg in self.degrees():
            hist[deg] = hist.get(deg, 0) + 1
        return dict(sorted(hist.items()))

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency as (indptr, indices) int64 arrays, neighbors ascending."""
        if self._csr is None:
            indptr = np.zeros(self.node_count + 1, dtype=np.int64)
            for v, nbrs in enumerate(self.adjacency):
                indptr[v + 1] = indptr[v] + len(nbrs)
            indices = np.fromiter(
                (u for nbrs in self.adjacency for u in nbrs),
                dtype=np.int64,
                count=int(indptr[-1]),
            )
            self._csr = (indptr, indices)
        return self._csr

    def is_connected(self) -> bool:
        return len(_bfs_distances(self.adjacency, 0)) == self.node_count

    def write_edge_list(self, path) -> None:
        """Export as ``u v`` lines, 0-based, one line per undirected edge."""
        with open(path, "w", encoding="ascii") as fh:
            for u, nbrs in enumerate(self.adjacency):
                for v in nbrs:
                    if u < v:
                        fh.write(f"{u} {v}\n")


def group_size(n: int) -> int:
    """Order of SL(2, Z_n): n^3 times prod(1 - 1/p^2) over distinct primes p | n.

    Exact integer arithmetic: multiply n^3 by (p^2 - 1) and divide by p^2 per
    prime factor.
    """
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    size = n**3
    for p in _distinct_primes(n):
        size = size * (p * p - 1) // (p * p)
    return size


def smallest_n_for(num_layers: int) -> tuple[int, int]:
    """Least n >= 2 whose group covers ``num_layers``, and that group's size."""
    if num_layers < 1:
        raise InvalidArgument(f"layer count must be >= 1, got {num_layers}")
    n = 2
    while group_size(n) < num_layers:
        n += 1
    return n, group_size(n)


def build_cayley(n: int) -> CayleyGraph:
    """Construct the graph by BFS closure from the identity.

    Frontier elements are right-multiplied by each generator in a fixed order,
    so node numbering (BFS discovery order) is reproducible. Parallel edges
    (possible for n = 2 where generators coincide) and self-loops are dropped.
    """
    if n < 2:
        raise InvalidArgument(f"n must be >= 2, got {n}")
    generators = [GroupElement(*pattern(n), n) for pattern in _GENERATOR_PATTERN]
    gen_keys = _dedupe([g.key() for g in generators])

    identity = (1 % n, 0, 0, 1 % n)
    index: dict[tuple[int, int, int, int], int] = {identity: 0}
    order: list[tuple[int, int, int, int]] = [identity]
    edges: list[set[int]] = [set()]
    queue: deque[tuple[int, int, int, int]] = deque([identity])

    while queue:
        cur = queue.popleft()
        ci = index[cur]
        a, b, c, d = cur
        for ga, gb, gc, gd in gen_keys:
            nxt = (
                (a * ga + b * gc) % n,
                (a * gb + b * gd) % n,
                (c * ga + d * gc) % n,
                (c * gb + d * gd) % n,
            )
            ni = index.get(nxt)
            if ni is None:
                ni = len(order)
                index[nxt] = ni
                order.append(nxt)
                edges.append(set())
                queue.append(nxt)
            if ni != ci:
                edges[ci].add(ni)
                edges[ni].add(ci)

    expected = group_size(n)
    if len(order) != expected:
        raise InvariantViolation(
            f"BFS closure found {len(order)} elements, size formula gives {expected}"
        )
    return CayleyGraph(
        n=n,
        nodes=[GroupElement(*k, n) for k in order],
        adjacency=[sorted(e) for e in edges],
        generators=generators,
    )


def graph_diameter(graph: CayleyGraph) -> int:
    """Exact diameter via all-pairs BFS. Intended for n <= 12."""
    adjacency = graph.adjacency
    if graph.node_count <= 1:
        return 0
    diameter = 0
    for source in range(graph.node_count):
        dist = _bfs_distances(adjacency, source)
        if len(dist) != graph.node_count:
            raise InvariantViolation("graph is disconnected; diameter undefined")
        diameter = max(diameter, max(dist.values()))
    return diameter


def _bfs_distances(adjacency: list[list[int]], source: int) -> dict[int, int]:
    dist = {source: 0}
    frontier = [source]
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for u in frontier:
            for v in adjacency[u]:
                if v not in dist:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt
    return dist


def _distinct_primes(n: int) -> list[int]:
    primes = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            primes.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        primes.append(n)
    return primes


def _dedupe(keys):
    seen = []
    for k in keys:
        if k not in seen:
            seen.append(k)
    return seen
