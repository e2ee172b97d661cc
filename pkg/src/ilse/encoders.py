"""The three structural encoders: set, fully-connected graph, Cayley graph.

All of them map an (L, d) stack of per-layer representations to one
``hidden``-wide vector: project each layer row, propagate (for the graph
variants) with GIN or GCN message passing, and reduce with a mean readout.
The Cayley variant pads the layer set with zero-initialized virtual nodes up
to the full group size and excludes them from the readout.

Exactness contracts, enforced by construction:
  * set/fc outputs are bitwise invariant to permutations of the input rows
    (permutation-invariant reductions sum in per-coordinate sorted order;
    the complete-graph aggregation is computed in closed form from such
    sums, which also avoids quadratic work);
  * the cayley output is bitwise invariant under permuting the rows and the
    assignment together;
  * readouts average non-virtual node features only, in ascending node-index
    order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cayley import CayleyGraph, group_size, smallest_n_for
from .errors import InvalidArgument
from .nn import Linear, Mlp, ParamStore
from .rng import stream

GRAPH_KINDS = ("fc", "cayley")
ENCODER_KINDS = ("set",) + GRAPH_KINDS
AGGREGATIONS = ("gin", "gcn")


@dataclass
class LayerStack:
    """One example's per-layer representations, one row per layer."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise InvalidArgument(f"layer stack must be (L>=1, d), got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise InvalidArgument("layer stack contains non-finite entries")

    @property
    def num_layers(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def mean_pool_tokens(tokens: np.ndarray) -> np.ndarray:
    """Average a (T, d) matrix of token representations into one d-vector."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise InvalidArgument(f"expected a nonempty (T, d) matrix, got shape {tokens.shape}")
    return tokens.mean(axis=0)


@dataclass
class EncoderConfig:
    """Architecture knobs shared by the encoders.

    ``hidden`` defaults to the fixed 256 used in all experiments; it is a
    field so diagnostic suites (gradient checks) can shrink the model.
    """

    kind: str
    aggregation: str = "gin"
    mpnn_layers: int = 1
    hidden: int = 256
    gin_mlp_depth: int = 1
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise InvalidArgument(f"unknown encoder kind {self.kind!r}")
        if self.aggregation not in AGGREGATIONS:
            raise InvalidArgument(f"unknown aggregation {self.aggregation!r}")
        if self.mpnn_layers not in (1, 2):
            raise InvalidArgument(f"mpnn_layers must be 1 or 2, got {self.mpnn_layers}")
        if self.gin_mlp_depth not in (0, 1, 2):
            raise InvalidArgument(f"gin_mlp_depth must be 0, 1 or 2, got {self.gin_mlp_depth}")
        if not 0.0 <= self.dropout <= 0.3:
            raise InvalidArgument(f"dropout must be in [0, 0.3], got {self.dropout}")
        if self.hidden < 1:
            raise InvalidArgument(f"hidden width must be positive, got {self.hidden}")


@dataclass
class GraphStructure:
    """CSR adjacency (symmetric, loop-free) plus lazily built GCN structure."""

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    _gcn: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @classmethod
    def from_cayley(cls, graph: CayleyGraph) -> "GraphStructure":
        indptr, indices = graph.csr()
        return cls(graph.node_count, indptr, indices)

    @classmethod
    def from_adjacency(cls, adjacency: list[list[int]]) -> "GraphStructure":
        n = len(adjacency)
        for v, nbrs in enumerate(adjacency):
            for u in nbrs:
                if u == v:
                    raise InvalidArgument("self-loops are not allowed in the adjacency")
                if v not in adjacency[u]:
                    raise InvalidArgument("adjacency must be symmetric")
        indptr = np.zeros(n + 1, dtype=np.int64)
        for v, nbrs in enumerate(adjacency):
            indptr[v + 1] = indptr[v] + len(nbrs)
        indices = np.array(
            [u for nbrs in adjacency for u in sorted(nbrs)] or [], dtype=np.int64
        )
        return cls(n, indptr, indices)

    @classmethod
    def complete(cls, n: int) -> "GraphStructure":
        return cls.from_adjacency([[u for u in range(n) if u != v] for v in range(n)])

    def gcn_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Self-loop-augmented structure with symmetric degree normalization.

        Edge (v, u) of A + I carries weight 1 / sqrt(deg(v) * deg(u)) where
        degrees count the self-loop.
        """
        if self._gcn is None:
            deg = np.diff(self.indptr) + 1
            indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
            indices = np.empty(int(self.indptr[-1]) + self.n_nodes, dtype=np.int64)
            weights = np.empty(indices.shape[0], dtype=np.float64)
            pos = 0
            for v in range(self.n_nodes):
                nbrs = self.indices[self.indptr[v] : self.indptr[v + 1]]
                merged = np.sort(np.append(nbrs, v))
                span = len(merged)
                indices[pos : pos + span] = merged
                weights[pos : pos + span] = 1.0 / np.sqrt(deg[v] * deg[merged])
                pos += span
                indptr[v + 1] = pos
            self._gcn = (indptr, indices, weights)
        return self._gcn


@dataclass
class NodeAssignment:
    """Injective map of layer indices onto graph nodes; the rest are virtual."""

    graph: CayleyGraph
    layer_to_node: np.ndarray
    virtual_mask: np.ndarray

    def __post_init__(self):
        n = self.graph.node_count
        lt = np.asarray(self.layer_to_node, dtype=np.int64)
        if len(np.unique(lt)) != len(lt):
            raise InvalidArgument("layer-to-node map must be injective")
        if lt.size and (lt.min() < 0 or lt.max() >= n):
            raise InvalidArgument("layer-to-node map points outside the graph")
        mask = np.asarray(self.virtual_mask, dtype=bool)
        if mask.shape != (n,):
            raise InvalidArgument("virtual mask length must equal node count")
        if mask[lt].any() or (~mask).sum() != lt.size:
            raise InvalidArgument("virtual mask inconsistent with the assignment")
        self.layer_to_node = lt
        self.virtual_mask = mask

    @property
    def num_layers(self) -> int:
        return self.layer_to_node.size

    def permuted(self, perm: np.ndarray) -> "NodeAssignment":
        """The assignment composed with a layer permutation (for the
        compensated-invariance property: permute rows with ``perm`` and the
        assignment with the same ``perm``)."""
        return NodeAssignment(self.graph, self.layer_to_node[np.asarray(perm)], self.virtual_mask)


def assign_layers(num_layers: int, graph: CayleyGraph, seed: int) -> NodeAssignment:
    """Seeded uniform injective assignment of layers onto graph nodes."""
    n = graph.node_count
    if n < num_layers:
        raise InvalidArgument(f"graph has {n} nodes, cannot hold {num_layers} layers")
    rng = stream(seed, "assign")
    chosen = rng.choice(n, size=num_layers, replace=False).astype(np.int64)
    mask = np.ones(n, dtype=bool)
    mask[chosen] = False
    return NodeAssignment(graph, chosen, mask)


def gin_layer(
    h: ad.Tensor,
    structure: GraphStructure,
    update: Mlp,
    train: bool = False,
    drop_rng: np.random.Generator | None = None,
) -> ad.Tensor:
    """h'_v = MLP(h_v + sum of neighbor features); epsilon fixed to 0."""
    agg = ad.neighbor_sum(h, structure.indptr, structure.indices)
    return update(ad.add(h, agg), train=train, drop_rng=drop_rng)


def gcn_layer(
    h: ad.Tensor,
    structure: GraphStructure,
    linear: Linear,
    activation: bool,
) -> ad.Tensor:
    """h' = act(D^-1/2 (A+I) D^-1/2 h W + b); ReLU unless this is the final layer."""
    indptr, indices, weights = structure.gcn_csr()
    out = linear(ad.neighbor_sum(h, indptr, indices, weights))
    return ad.relu(out) if activation else out


class SetEncoder:
    """Shared per-layer map, permutation-invariant mean pool, output map."""

    def __init__(self, store: ParamStore, config: EncoderConfig, num_layers: int, dim: int):
        if config.kind != "set":
            raise InvalidArgument(f"config kind {config.kind!r} is not 'set'")
        self.config = config
        self.phi = Linear(store, "phi", dim, config.hidden, config.seed)
        self.rho = Linear(store, "rho", config.hidden, config.hidden, config.seed)
        self.num_layers = num_layers
        self.dim = dim
        self.out_dim = config.hidden

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _batch_tensor(stacks, self.num_layers, self.dim)
        per_layer = ad.relu(self.phi(x))
        per_layer = ad.dropout(per_layer, self.config.dropout, drop_rng, train)
        pooled = ad.pool_mean(per_layer, axis=1)
        return self.rho(pooled)


class FcEncoder:
    """Message passing over the complete graph on the layers.

    Complete-graph aggregation has a closed form in terms of the (canonically
    ordered) node sum S: GIN sees h_v + (S - h_v); GCN's normalized operator
    is the all-pairs mean S / L because every node has degree L after adding
    self-loops. Using these forms keeps the output exactly permutation
    invariant and costs O(L) instead of O(L^2).
    """

    def __init__(self, store: ParamStore, config: EncoderConfig, num_layers: int, dim: int):
        if config.kind != "fc":
            raise InvalidArgument(f"config kind {config.kind!r} is not 'fc'")
        self.config = config
        self.num_layers = num_layers
        self.dim = dim
        self.out_dim = config.hidden
        self.proj = Linear(store, "proj", dim, config.hidden, config.seed)
        self._build_mpnn(store, config)

    def _build_mpnn(self, store: ParamStore, config: EncoderConfig):
        h = config.hidden
        self.updates = []
        for i in range(config.mpnn_layers):
            if config.aggregation == "gin":
                # dropout lives after the MPNN layer, not inside the update MLP
                widths = (h,) * (config.gin_mlp_depth + 2)
                self.updates.append(Mlp(store, f"mpnn.{i}", widths, config.seed))
            else:
                self.updates.append(Linear(store, f"mpnn.{i}", h, h, config.seed))

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _batch_tensor(stacks, self.num_layers, self.dim)
        h = self.proj(x)
        batch, n_nodes = h.shape[0], self.num_layers
        for i, update in enumerate(self.updates):
            final = i == len(self.updates) - 1
            if self.config.aggregation == "gin":
                total = ad.reshape(ad.pool_sum(h, axis=1), (batch, 1, -1))
                agg = ad.sub(total, h)  # complete graph: neighbors of v sum to S - h_v
                h = update(ad.add(h, agg), train=train, drop_rng=drop_rng)
            else:
                pooled = ad.reshape(ad.pool_mean(h, axis=1), (batch, 1, -1))
                out = update(pooled)
                if not final:
                    out = ad.relu(out)
                # every node receives the same aggregated feature
                h = ad.add(out, ad.Tensor(np.zeros((batch, n_nodes, 1))))
            h = ad.dropout(h, self.config.dropout, drop_rng, train)
        return ad.pool_mean(h, axis=1)


class CayleyEncoder:
    """Layers mapped onto a Cayley graph, padded with zero virtual nodes.

    Node features start as the input projection of the assigned layer rows;
    virtual nodes start at the exact zero vector in feature space (not the
    projection of a zero input, which would be the bias). After message
    passing, the readout averages non-virtual nodes only.
    """

    def __init__(
        self,
        store: ParamStore,
        config: EncoderConfig,
        num_layers: int,
        dim: int,
        assignment: NodeAssignment | None = None,
    ):
        if config.kind != "cayley":
            raise InvalidArgument(f"config kind {config.kind!r} is not 'cayley'")
        self.config = config
        self.num_layers = num_layers
        self.dim = dim
        self.out_dim = config.hidden
        if assignment is None:
            from .cayley import build_cayley

            n, _ = smallest_n_for(num_layers)
            assignment = assign_layers(num_layers, build_cayley(n), config.seed)
        if assignment.num_layers != num_layers:
            raise InvalidArgument(
                f"assignment holds {assignment.num_layers} layers, stack has {num_layers}"
            )
        self.assignment = assignment
        self.structure = GraphStructure.from_cayley(assignment.graph)
        self.readout_index = np.sort(assignment.layer_to_node)
        self.proj = Linear(store, "proj", dim, config.hidden, config.seed)
        self._updates = []
        h = config.hidden
        for i in range(config.mpnn_layers):
            if config.aggregation == "gin":
                widths = (h,) * (config.gin_mlp_depth + 2)
                self._updates.append(Mlp(store, f"mpnn.{i}", widths, config.seed))
            else:
                self._updates.append(Linear(store, f"mpnn.{i}", h, h, config.seed))

    def node_features(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        """Run projection and message passing; returns (B, |V|, hidden)."""
        x = _batch_tensor(stacks, self.num_layers, self.dim)
        proj = self.proj(x)
        h = ad.scatter_nodes(proj, self.assignment.layer_to_node, self.structure.n_nodes)
        for i, update in enumerate(self._updates):
            final = i == len(self._updates) - 1
            if self.config.aggregation == "gin":
                h = gin_layer(h, self.structure, update, train=train, drop_rng=drop_rng)
            else:
                h = gcn_layer(h, self.structure, update, activation=not final)
            h = ad.dropout(h, self.config.dropout, drop_rng, train)
        return h

    def readout(self, node_feats: ad.Tensor) -> ad.Tensor:
        """Mean over non-virtual nodes, ascending node index."""
        return ad.mean(ad.take_nodes(node_feats, self.readout_index), axis=1)

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        return self.readout(self.node_features(stacks, train=train, drop_rng=drop_rng))


def _batch_tensor(stacks, num_layers: int, dim: int) -> ad.Tensor:
    if isinstance(stacks, ad.Tensor):
        data = stacks.data
    else:
        data = np.asarray(stacks, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
    if data.ndim != 3 or data.shape[1:] != (num_layers, dim):
        raise InvalidArgument(
            f"expected stacks shaped (B, {num_layers}, {dim}), got {data.shape}"
        )
    return stacks if isinstance(stacks, ad.Tensor) else ad.Tensor(data)


def _single(encoder, stack: LayerStack) -> np.ndarray:
    out = encoder.encode(stack.matrix[None])
    return out.data[0].copy()


def set_encode(stack: LayerStack, store: ParamStore, config: EncoderConfig) -> np.ndarray:
    """Single-example set encoding (evaluation mode)."""
    return _single(SetEncoder(store, config, stack.num_layers, stack.dim), stack)


def fc_encode(stack: LayerStack, store: ParamStore, config: EncoderConfig) -> np.ndarray:
    """Single-example complete-graph encoding (evaluation mode)."""
    return _single(FcEncoder(store, config, stack.num_layers, stack.dim), stack)


def cayley_encode(
    stack: LayerStack,
    assignment: NodeAssignment,
    store: ParamStore,
    config: EncoderConfig,
) -> np.ndarray:
    """Single-example Cayley-graph encoding (evaluation mode)."""
    expected = group_size(smallest_n_for(stack.num_layers)[0])
    if assignment.graph.node_count != expected:
        raise InvalidArgument(
            f"assignment graph has {assignment.graph.node_count} nodes; "
            f"the smallest covering group for L={stack.num_layers} has {expected}"
        )
    enc = CayleyEncoder(store, config, stack.num_layers, stack.dim, assignment)
    return _single(enc, stack)
