import numpy as np
import pytest

from ilse import (
    CayleyEncoder,
    EncoderConfig,
    FcEncoder,
    GraphStructure,
    InvalidArgument,
    LayerStack,
    Mlp,
    NodeAssignment,
    ParamStore,
    SetEncoder,
    assign_layers,
    build_cayley,
    cayley_encode,
    fc_encode,
    gcn_layer,
    gin_layer,
    mean_pool_tokens,
    set_encode,
)
from ilse import autodiff as ad
from ilse.nn import Linear

# ---------------------------------------------------------------- oracles


def dense_adjacency(structure: GraphStructure) -> np.ndarray:
    a = np.zeros((structure.n_nodes, structure.n_nodes))
    for v in range(structure.n_nodes):
        for u in structure.indices[structure.indptr[v] : structure.indptr[v + 1]]:
            a[v, u] = 1.0
    return a


def np_mlp(x, store, prefix, n_layers):
    for i in range(n_layers):
        x = x @ store[f"{prefix}.{i}.w"].data + store[f"{prefix}.{i}.b"].data
        if i < n_layers - 1:
            x = np.maximum(x, 0.0)
    return x


def oracle_set(x, store):
    phi = np.maximum(x @ store["phi.w"].data + store["phi.b"].data, 0.0)
    return phi.mean(axis=1) @ store["rho.w"].data + store["rho.b"].data


def oracle_graph(x, store, config, adjacency, scatter=None, readout_idx=None):
    """Straight-line dense reimplementation of the fc/cayley forward pass."""
    h = x @ store["proj.w"].data + store["proj.b"].data
    if scatter is not None:
        n = adjacency.shape[0]
        full = np.zeros((x.shape[0], n, h.shape[2]))
        full[:, scatter, :] = h
        h = full
    for i in range(config.mpnn_layers):
        final = i == config.mpnn_layers - 1
        if config.aggregation == "gin":
            agg = np.einsum("vu,buw->bvw", adjacency, h)
            h = np_mlp(h + agg, store, f"mpnn.{i}", config.gin_mlp_depth + 1)
        else:
            a_hat = adjacency + np.eye(adjacency.shape[0])
            dinv = 1.0 / np.sqrt(a_hat.sum(axis=1))
            norm = dinv[:, None] * a_hat * dinv[None, :]
            h = np.einsum("vu,buw->bvw", norm, h)
            h = h @ store[f"mpnn.{i}.w"].data + store[f"mpnn.{i}.b"].data
            if not final:
                h = np.maximum(h, 0.0)
    if readout_idx is not None:
        h = h[:, readout_idx, :]
    return h.mean(axis=1)


# ---------------------------------------------------------------- pooling


class TestMeanPoolTokens:
    def test_single_token_identity(self):
        np.testing.assert_array_equal(mean_pool_tokens([[1.0, 2.0, 3.0]]), [1.0, 2.0, 3.0])

    def test_arithmetic_mean(self):
        np.testing.assert_array_equal(mean_pool_tokens([[1.0, 0.0], [3.0, 2.0]]), [2.0, 1.0])

    def test_matches_column_sum_oracle(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((7, 16))
        np.testing.assert_allclose(mean_pool_tokens(h), h.sum(axis=0) / 7.0, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            mean_pool_tokens(np.zeros((0, 4)))


class TestConfig:
    def test_defaults(self):
        cfg = EncoderConfig(kind="set")
        assert cfg.hidden == 256

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "ring"},
            {"kind": "fc", "aggregation": "sage"},
            {"kind": "fc", "mpnn_layers": 3},
            {"kind": "fc", "gin_mlp_depth": 5},
            {"kind": "set", "dropout": 0.5},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(InvalidArgument):
            EncoderConfig(**kwargs)


class TestAssignLayers:
    def test_full_graph_is_permutation(self):
        graph = build_cayley(2)
        a = assign_layers(6, graph, seed=0)
        assert sorted(a.layer_to_node) == list(range(6))
        assert not a.virtual_mask.any()

    def test_25_layers_on_48_nodes(self):
        graph = build_cayley(4)
        a = assign_layers(25, graph, seed=3)
        assert graph.node_count == 48
        assert int(a.virtual_mask.sum()) == 23
        assert len(set(a.layer_to_node)) == 25

    def test_seed_determinism_and_variety(self):
        graph = build_cayley(3)
        same = [assign_layers(10, graph, seed=5).layer_to_node for _ in range(2)]
        assert np.array_equal(same[0], same[1])
        distinct = {tuple(assign_layers(10, graph, seed=s).layer_to_node) for s in range(10)}
        assert len(distinct) > 1

    def test_too_small_graph(self):
        with pytest.raises(InvalidArgument):
            assign_layers(100, build_cayley(2), seed=0)

    def test_inconsistent_mask_rejected(self):
        graph = build_cayley(2)
        with pytest.raises(InvalidArgument):
            NodeAssignment(graph, np.array([0, 1]), np.ones(6, dtype=bool))


class TestSetEncoder:
    def test_identity_collapse(self):
        # phi and rho arranged to pass a positive stack through unchanged
        d = 4
        store = ParamStore()
        enc = SetEncoder(store, EncoderConfig(kind="set", hidden=d), num_layers=3, dim=d)
        store["phi.w"].data = np.eye(d)
        store["rho.w"].data = np.eye(d)
        store["phi.b"].data[:] = 0.0
        store["rho.b"].data[:] = 0.0
        stack = np.abs(np.random.default_rng(0).standard_normal((3, d))) + 0.1
        out = enc.encode(stack[None]).data[0]
        np.testing.assert_allclose(out, stack.mean(axis=0), atol=1e-12)

    def test_bitwise_permutation_invariance(self):
        rng = np.random.default_rng(1)
        store = ParamStore()
        enc = SetEncoder(store, EncoderConfig(kind="set", hidden=16, seed=2), 9, 7)
        stack = rng.standard_normal((9, 7))
        base = enc.encode(stack[None]).data
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(9)
            assert np.array_equal(base, enc.encode(stack[perm][None]).data)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(2)
        store = ParamStore()
        enc = SetEncoder(store, EncoderConfig(kind="set", hidden=11, seed=4), 5, 6)
        x = rng.standard_normal((3, 5, 6))
        np.testing.assert_allclose(enc.encode(x).data, oracle_set(x, store), atol=1e-10)

    def test_width_mismatch_rejected(self):
        store = ParamStore()
        enc = SetEncoder(store, EncoderConfig(kind="set", hidden=8), 4, 6)
        with pytest.raises(InvalidArgument):
            enc.encode(np.zeros((2, 4, 5)))

    def test_functional_wrapper(self):
        store = ParamStore()
        cfg = EncoderConfig(kind="set", hidden=8, seed=0)
        stack = LayerStack(np.random.default_rng(3).standard_normal((4, 6)))
        out1 = set_encode(stack, store, cfg)
        out2 = set_encode(stack, store, cfg)  # params reused
        assert out1.shape == (8,)
        assert np.array_equal(out1, out2)


class TestGinLayer:
    def _identity_mlp(self, store, width, prefix="u"):
        mlp = Mlp(store, prefix, (width, width), seed=0)
        store[f"{prefix}.0.w"].data = np.eye(width)
        store[f"{prefix}.0.b"].data[:] = 0.0
        return mlp

    def test_empty_edge_graph_identity(self):
        structure = GraphStructure.from_adjacency([[], [], []])
        store = ParamStore()
        mlp = self._identity_mlp(store, 4)
        h = np.random.default_rng(0).standard_normal((2, 3, 4))
        out = gin_layer(ad.Tensor(h), structure, mlp)
        np.testing.assert_array_equal(out.data, h)

    def test_two_node_path_hand_sum(self):
        structure = GraphStructure.from_adjacency([[1], [0]])
        store = ParamStore()
        mlp = self._identity_mlp(store, 3)
        h = np.arange(6, dtype=float).reshape(1, 2, 3)
        out = gin_layer(ad.Tensor(h), structure, mlp)
        np.testing.assert_allclose(out.data[0, 0], h[0, 0] + h[0, 1])
        np.testing.assert_allclose(out.data[0, 1], h[0, 1] + h[0, 0])

    def test_cayley_matches_dense_oracle(self):
        graph = build_cayley(3)
        structure = GraphStructure.from_cayley(graph)
        store = ParamStore()
        mlp = Mlp(store, "u", (5, 5, 5), seed=1)
        h = np.random.default_rng(1).standard_normal((2, graph.node_count, 5))
        out = gin_layer(ad.Tensor(h), structure, mlp)
        dense = dense_adjacency(structure)
        expected = np_mlp(h + np.einsum("vu,buw->bvw", dense, h), store, "u", 2)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)


class TestGcnLayer:
    def test_single_node_self_loop(self):
        structure = GraphStructure.from_adjacency([[]])
        store = ParamStore()
        lin = Linear(store, "g", 3, 3, seed=0)
        store["g.w"].data = np.eye(3)
        store["g.b"].data[:] = 0.0
        h = np.array([[[-1.0, 0.5, 2.0]]])
        out = gcn_layer(ad.Tensor(h), structure, lin, activation=True)
        np.testing.assert_allclose(out.data, np.maximum(h, 0.0))

    def test_two_node_path_normalization(self):
        # degrees with self-loops are 2, so the cross term carries 1/2
        structure = GraphStructure.from_adjacency([[1], [0]])
        store = ParamStore()
        lin = Linear(store, "g", 2, 2, seed=0)
        store["g.w"].data = np.eye(2)
        store["g.b"].data[:] = 0.0
        h = np.array([[[2.0, 4.0], [6.0, 8.0]]])
        out = gcn_layer(ad.Tensor(h), structure, lin, activation=False)
        np.testing.assert_allclose(out.data[0, 0], 0.5 * h[0, 0] + 0.5 * h[0, 1])
        np.testing.assert_allclose(out.data[0, 1], 0.5 * h[0, 1] + 0.5 * h[0, 0])

    def test_random_graph_matches_dense_oracle(self):
        structure = GraphStructure.from_adjacency([[1, 2], [0], [0, 3], [2]])
        store = ParamStore()
        lin = Linear(store, "mpnn.0", 4, 4, seed=2)
        h = np.random.default_rng(2).standard_normal((3, 4, 4))
        out = gcn_layer(ad.Tensor(h), structure, lin, activation=True)
        dense = dense_adjacency(structure)
        a_hat = dense + np.eye(4)
        dinv = 1.0 / np.sqrt(a_hat.sum(axis=1))
        norm = dinv[:, None] * a_hat * dinv[None, :]
        expected = np.maximum(
            np.einsum("vu,buw->bvw", norm, h) @ store["mpnn.0.w"].data + store["mpnn.0.b"].data,
            0.0,
        )
        np.testing.assert_allclose(out.data, expected, atol=1e-10)


class TestCayleyEncoder:
    def _build(self, aggregation="gin", mpnn_layers=1, hidden=8, L=5, d=6, seed=0, depth=1):
        cfg = EncoderConfig(
            kind="cayley",
            aggregation=aggregation,
            mpnn_layers=mpnn_layers,
            hidden=hidden,
            gin_mlp_depth=depth,
            seed=seed,
        )
        store = ParamStore()
        enc = CayleyEncoder(store, cfg, L, d)
        return enc, store, cfg

    def test_zero_params_zero_output(self):
        enc, store, _ = self._build()
        for t in store.params.values():
            t.data[:] = 0.0
        out = enc.encode(np.random.default_rng(0).standard_normal((2, 5, 6)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_virtual_neighbors_contribute_zero_at_hop_one(self):
        # dropping every virtual->real edge does not change hop-1 sums
        enc, store, cfg = self._build(depth=0)
        x = np.random.default_rng(1).standard_normal((1, 5, 6))
        full = enc.node_features(x).data
        graph = enc.assignment.graph
        real = set(enc.assignment.layer_to_node.tolist())
        pruned = [
            [u for u in nbrs if u in real] for v, nbrs in enumerate(graph.adjacency)
        ]
        indptr = np.zeros(len(pruned) + 1, dtype=np.int64)
        for v, nbrs in enumerate(pruned):
            indptr[v + 1] = indptr[v] + len(nbrs)
        indices = np.array([u for nbrs in pruned for u in nbrs], dtype=np.int64)
        proj = x @ store["proj.w"].data + store["proj.b"].data
        h0 = np.zeros((1, graph.node_count, cfg.hidden))
        h0[:, enc.assignment.layer_to_node, :] = proj
        agg = ad.neighbor_sum(ad.Tensor(h0), indptr, indices).data
        expected = np_mlp(h0 + agg, store, "mpnn.0", 1)
        np.testing.assert_allclose(full, expected, atol=1e-12)

    @pytest.mark.parametrize("aggregation,mpnn_layers,depth", [
        ("gin", 1, 0), ("gin", 2, 1), ("gin", 1, 2), ("gcn", 1, 0), ("gcn", 2, 0),
    ])
    def test_matches_dense_oracle(self, aggregation, mpnn_layers, depth):
        enc, store, cfg = self._build(aggregation, mpnn_layers, depth=depth, seed=7)
        x = np.random.default_rng(5).standard_normal((3, 5, 6))
        dense = dense_adjacency(enc.structure)
        expected = oracle_graph(
            x, store, cfg, dense,
            scatter=enc.assignment.layer_to_node,
            readout_idx=enc.readout_index,
        )
        np.testing.assert_allclose(enc.encode(x).data, expected, atol=1e-10)

    def test_compensated_permutation_invariance(self):
        cfg = EncoderConfig(kind="cayley", hidden=8, seed=0)
        store = ParamStore()
        base_assignment = assign_layers(6, build_cayley(2), seed=1)
        enc = CayleyEncoder(store, cfg, 6, 4, base_assignment)
        x = np.random.default_rng(2).standard_normal((6, 4))
        base = enc.encode(x[None]).data
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(6)
            store2 = ParamStore()
            enc2 = CayleyEncoder(store2, cfg, 6, 4, base_assignment.permuted(perm))
            for name in store2.names():
                store2[name].data = store[name].data.copy()
            assert np.array_equal(base, enc2.encode(x[perm][None]).data)

    def test_not_invariant_without_compensation(self):
        enc, _, _ = self._build(L=6, seed=3)
        x = np.random.default_rng(3).standard_normal((6, 6))
        perm = np.array([3, 1, 0, 2, 5, 4])
        assert not np.allclose(enc.encode(x[None]).data, enc.encode(x[perm][None]).data)

    def test_virtual_nodes_excluded_from_readout(self):
        enc, _, _ = self._build(L=5)
        x = np.random.default_rng(4).standard_normal((2, 5, 6))
        feats = enc.node_features(x)
        base = enc.readout(feats).data
        corrupted = feats.data.copy()
        corrupted[:, enc.assignment.virtual_mask, :] = 1e6
        again = enc.readout(ad.Tensor(corrupted)).data
        assert np.array_equal(base, again)

    def test_zero_stack_equals_zero_scaled_stack(self):
        enc, _, _ = self._build()
        x = np.random.default_rng(6).standard_normal((2, 5, 6))
        assert np.array_equal(enc.encode(0.0 * x).data, enc.encode(np.zeros_like(x)).data)

    def test_default_width_256(self):
        store = ParamStore()
        enc = CayleyEncoder(store, EncoderConfig(kind="cayley"), 5, 3)
        assert enc.encode(np.zeros((2, 5, 3))).shape == (2, 256)

    def test_functional_wrapper_enforces_smallest_n(self):
        stack = LayerStack(np.random.default_rng(0).standard_normal((5, 4)))
        oversized = assign_layers(5, build_cayley(3), seed=0)  # 24 nodes, smallest is 6
        with pytest.raises(InvalidArgument):
            cayley_encode(stack, oversized, ParamStore(), EncoderConfig(kind="cayley", hidden=8))

    def test_functional_wrapper_ok(self):
        stack = LayerStack(np.random.default_rng(0).standard_normal((5, 4)))
        assignment = assign_layers(5, build_cayley(2), seed=0)
        out = cayley_encode(stack, assignment, ParamStore(), EncoderConfig(kind="cayley", hidden=8))
        assert out.shape == (8,)


class TestFcEncoder:
    def _build(self, aggregation="gin", mpnn_layers=1, hidden=8, L=5, d=6, seed=0, depth=1):
        cfg = EncoderConfig(
            kind="fc",
            aggregation=aggregation,
            mpnn_layers=mpnn_layers,
            hidden=hidden,
            gin_mlp_depth=depth,
            seed=seed,
        )
        store = ParamStore()
        return FcEncoder(store, cfg, L, d), store, cfg

    def test_single_layer_degenerates_to_mlp_on_row(self):
        enc, store, cfg = self._build(L=1)
        x = np.random.default_rng(0).standard_normal((2, 1, 6))
        out = enc.encode(x).data
        proj = x @ store["proj.w"].data + store["proj.b"].data
        expected = np_mlp(proj, store, "mpnn.0", cfg.gin_mlp_depth + 1).mean(axis=1)
        np.testing.assert_allclose(out, expected, atol=1e-10)

    @pytest.mark.parametrize("aggregation", ["gin", "gcn"])
    def test_bitwise_permutation_invariance(self, aggregation):
        enc, _, _ = self._build(aggregation, mpnn_layers=2, L=7)
        x = np.random.default_rng(1).standard_normal((7, 6))
        base = enc.encode(x[None]).data
        for seed in range(5):
            perm = np.random.default_rng(seed).permutation(7)
            assert np.array_equal(base, enc.encode(x[perm][None]).data)

    @pytest.mark.parametrize("aggregation,mpnn_layers,depth", [
        ("gin", 1, 0), ("gin", 2, 1), ("gcn", 1, 0), ("gcn", 2, 0),
    ])
    def test_matches_dense_oracle(self, aggregation, mpnn_layers, depth):
        enc, store, cfg = self._build(aggregation, mpnn_layers, depth=depth, seed=9, L=6)
        x = np.random.default_rng(5).standard_normal((3, 6, 6))
        dense = dense_adjacency(GraphStructure.complete(6))
        expected = oracle_graph(x, store, cfg, dense)
        np.testing.assert_allclose(enc.encode(x).data, expected, atol=1e-10)

    def test_closed_form_matches_generic_message_passing(self):
        # the complete-graph shortcut must agree with the generic CSR path
        enc, store, cfg = self._build("gin", L=6, depth=1, seed=11)
        x = np.random.default_rng(7).standard_normal((2, 6, 6))
        structure = GraphStructure.complete(6)
        proj = ad.matmul(ad.Tensor(x), store["proj.w"])
        proj = ad.add(proj, store["proj.b"])
        generic = gin_layer(proj, structure, enc.updates[0])
        np.testing.assert_allclose(
            enc.encode(x).data, generic.data.mean(axis=1), atol=1e-10
        )

    def test_output_width(self):
        enc, _, _ = self._build(hidden=16)
        assert enc.encode(np.zeros((4, 5, 6))).shape == (4, 16)

    def test_functional_wrapper(self):
        stack = LayerStack(np.random.default_rng(2).standard_normal((4, 5)))
        out = fc_encode(stack, ParamStore(), EncoderConfig(kind="fc", hidden=8))
        assert out.shape == (8,)
