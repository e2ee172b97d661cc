"""Comparison methods: single-layer probes, learned layer mixing, depth attention.

All of them consume the same (B, L, d) stacks as the structural encoders and
produce one vector per example; the training harness attaches the task head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument, InvalidState
from .nn import Linear, Mlp, ParamStore, accuracy, spearman
from .rng import stream

BASELINE_KINDS = ("last_layer", "best_layer", "weighted", "mlp_last", "mlp_best", "dwatt")


@dataclass
class BaselineConfig:
    kind: str
    hidden: int = 256
    dropout: float = 0.0
    selected_layer: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise InvalidArgument(f"unknown baseline kind {self.kind!r}")
        if not 0.0 <= self.dropout <= 0.3:
            raise InvalidArgument(f"dropout must be in [0, 0.3], got {self.dropout}")


class LastLayerEncoder:
    """Row L-1 of the stack, unchanged. No trainable parameters."""

    def __init__(self, store: ParamStore, config: BaselineConfig, num_layers: int, dim: int):
        self.num_layers = num_layers
        self.out_dim = dim

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _tensor3(stacks)
        row = ad.take_nodes(x, np.array([self.num_layers - 1]))
        return ad.reshape(row, (x.shape[0], self.out_dim))


class BestLayerEncoder:
    """The sweep-selected row, unchanged. No trainable parameters."""

    def __init__(self, store: ParamStore, config: BaselineConfig, num_layers: int, dim: int):
        if config.selected_layer is None:
            raise InvalidState("best_layer requires selected_layer (run layer_sweep first)")
        if not 0 <= config.selected_layer < num_layers:
            raise InvalidArgument(f"selected_layer {config.selected_layer} outside [0, {num_layers})")
        self.layer = config.selected_layer
        self.out_dim = dim

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _tensor3(stacks)
        row = ad.take_nodes(x, np.array([self.layer]))
        return ad.reshape(row, (x.shape[0], self.out_dim))


class WeightedEncoder:
    """Softmax-weighted convex combination of the rows.

    Exactly L trainable scalars, zero-initialized so training starts at the
    plain layer mean.
    """

    def __init__(self, store: ParamStore, config: BaselineConfig, num_layers: int, dim: int):
        self.weights = store.get_or_add("mix", (num_layers,), lambda: np.zeros(num_layers))
        self.num_layers = num_layers
        self.out_dim = dim

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _tensor3(stacks)
        alpha = ad.reshape(ad.softmax(self.weights), (1, 1, self.num_layers))
        return ad.reshape(ad.matmul(alpha, x), (x.shape[0], self.out_dim))

    def mixture(self) -> np.ndarray:
        return ad.softmax(self.weights).data.copy()


class MlpBaselineEncoder:
    """Two-layer MLP (d -> hidden -> hidden, ReLU between) on one chosen row."""

    def __init__(self, store: ParamStore, config: BaselineConfig, num_layers: int, dim: int):
        if config.kind == "mlp_best":
            if config.selected_layer is None:
                raise InvalidState("mlp_best requires selected_layer (run layer_sweep first)")
            self.layer = config.selected_layer
        else:
            self.layer = num_layers - 1
        if not 0 <= self.layer < num_layers:
            raise InvalidArgument(f"selected_layer {self.layer} outside [0, {num_layers})")
        self.mlp = Mlp(store, "mlp", (dim, config.hidden, config.hidden), config.seed, config.dropout)
        self.out_dim = config.hidden

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _tensor3(stacks)
        row = ad.reshape(ad.take_nodes(x, np.array([self.layer])), (x.shape[0], -1))
        return self.mlp(row, train=train, drop_rng=drop_rng)


class DwattEncoder:
    """Depth-wise attention anchored on the last layer.

    All rows are projected to the hidden width; a query derived from the
    projected last row attends over learned per-layer key vectors, and the
    attended MLP-transformed values are added residually onto the projected
    last row.
    """

    def __init__(self, store: ParamStore, config: BaselineConfig, num_layers: int, dim: int):
        h = config.hidden
        rng = stream(config.seed, "init", "dwatt.keys")
        self.proj = Linear(store, "proj", dim, h, config.seed)
        self.query = Linear(store, "query", h, h, config.seed)
        # column l holds layer l's positional key
        self.keys = store.get_or_add(
            "keys", (h, num_layers),
            lambda: rng.uniform(-np.sqrt(1.0 / h), np.sqrt(1.0 / h), size=(h, num_layers)),
        )
        self.values = Mlp(store, "value", (h, h, h), config.seed, config.dropout)
        self.num_layers = num_layers
        self.hidden = h
        self.out_dim = h

    def _attention(self, projected: ad.Tensor, batch: int) -> tuple[ad.Tensor, ad.Tensor]:
        last = ad.reshape(ad.take_nodes(projected, np.array([self.num_layers - 1])), (batch, -1))
        q = self.query(last)
        scores = ad.mul(ad.matmul(q, self.keys), 1.0 / np.sqrt(self.hidden))
        return last, ad.softmax(scores, axis=-1)

    def encode(self, stacks, train: bool = False, drop_rng=None) -> ad.Tensor:
        x = _tensor3(stacks)
        batch = x.shape[0]
        p = self.proj(x)
        last, alpha = self._attention(p, batch)
        values = self.values(p, train=train, drop_rng=drop_rng)
        attended = ad.reshape(ad.matmul(ad.reshape(alpha, (batch, 1, -1)), values), (batch, -1))
        return ad.add(last, attended)

    def attention_weights(self, stacks) -> np.ndarray:
        x = _tensor3(stacks)
        _, alpha = self._attention(self.proj(x), x.shape[0])
        return alpha.data.copy()


def _tensor3(stacks) -> ad.Tensor:
    if isinstance(stacks, ad.Tensor):
        return stacks
    data = np.asarray(stacks, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise InvalidArgument(f"expected (B, L, d) stacks, got shape {data.shape}")
    return ad.Tensor(data)


def last_layer_encode(stack) -> np.ndarray:
    """Row L-1 of a single (L, d) stack."""
    matrix = stack.matrix if hasattr(stack, "matrix") else np.asarray(stack, dtype=np.float64)
    return matrix[-1].copy()


def weighted_encode(stack, weights: np.ndarray) -> np.ndarray:
    """Softmax(weights) combination of a single stack's rows."""
    matrix = stack.matrix if hasattr(stack, "matrix") else np.asarray(stack, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (matrix.shape[0],):
        raise InvalidArgument(f"need one weight per layer, got {weights.shape} for L={matrix.shape[0]}")
    shifted = np.exp(weights - weights.max())
    alpha = shifted / shifted.sum()
    return alpha @ matrix


def train_linear_probe(
    features: np.ndarray,
    labels: np.ndarray,
    val_features: np.ndarray,
    val_labels: np.ndarray,
    n_classes: int,
    seed: int,
    lr: float = 1e-3,
    weight_decay: float = 0.0,
    steps: int = 300,
    eval_every: int = 10,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Full-batch Adam training of a linear softmax probe.

    Returns (best validation accuracy, best W, best b).
    """
    store = ParamStore()
    probe = Linear(store, "probe", features.shape[1], n_classes, seed)
    x = ad.Tensor(features)
    best = -1.0
    best_snap = store.snapshot()
    for step in range(1, steps + 1):
        loss = ad.cross_entropy(probe(x), labels)
        store.zero_grad()
        loss.backward()
        store.adam_step(lr, weight_decay)
        if step % eval_every == 0 or step == steps:
            logits = probe(ad.Tensor(val_features)).data
            acc = accuracy(logits, val_labels)
            if acc > best:
                best = acc
                best_snap = store.snapshot()
    return best, best_snap["probe.w"], best_snap["probe.b"]


def layer_sweep(dataset, layer_range=None, seed: int = 0, lr: float = 1e-3, steps: int = 300):
    """Score every layer independently on the validation split.

    Classification: validation accuracy of a linear probe trained on that
    layer's rows. Pair regression: Spearman correlation of the raw cosine of
    that layer's rows against gold. Returns (scores, best_layer); ties break
    toward the deeper layer.
    """
    from .data import SPLIT_TRAIN, SPLIT_VALIDATION

    layers = list(range(dataset.L) if layer_range is None else layer_range)
    val_idx = dataset.indices(SPLIT_VALIDATION)
    if val_idx.size == 0:
        raise InvalidArgument("layer sweep needs a nonempty validation split")
    scores = np.zeros(len(layers))
    if dataset.kind == "classification":
        train_idx = dataset.indices(SPLIT_TRAIN)
        if train_idx.size == 0:
            raise InvalidArgument("layer sweep needs a nonempty train split")
        # one probe seed for the whole sweep: scoring must be a function of
        # the layer's features alone, so identical layers tie exactly
        probe_seed = int(stream(seed, "sweep").integers(2**31))
        for pos, layer in enumerate(layers):
            scores[pos], _, _ = train_linear_probe(
                dataset.stacks[train_idx, layer, :],
                dataset.labels[train_idx],
                dataset.stacks[val_idx, layer, :],
                dataset.labels[val_idx],
                dataset.K,
                seed=probe_seed,
                lr=lr,
                steps=steps,
            )
    else:
        for pos, layer in enumerate(layers):
            za = dataset.stacks_a[val_idx, layer, :]
            zb = dataset.stacks_b[val_idx, layer, :]
            cos = ad.cosine(ad.Tensor(za), ad.Tensor(zb)).data
            scores[pos] = spearman(cos, dataset.gold[val_idx])
    picked = layers[len(scores) - 1 - int(np.argmax(scores[::-1]))]
    return scores, picked
