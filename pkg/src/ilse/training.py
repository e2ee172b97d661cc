"""Training, evaluation, grid search, few-shot curves, parameter accounting.

A method name selects an encoder (structural or baseline); the harness owns
the task head, the Adam loop, early stopping on validation, and metric
reporting. Classification trains a linear head with cross-entropy and scores
accuracy; pair regression trains on cosine-MSE and scores Spearman of the
head-free encoder cosines.

Determinism contract: (config, seed, dataset bytes) fully determine every
reported number. Wall time is recorded but excluded from serialized metrics
unless explicitly requested, so identical runs serialize to identical bytes.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .baselines import (
    BaselineConfig,
    BestLayerEncoder,
    DwattEncoder,
    LastLayerEncoder,
    MlpBaselineEncoder,
    WeightedEncoder,
    layer_sweep,
)
from .data import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VALIDATION,
    TASK_CLASSIFICATION,
    TaskDataset,
    few_shot_subset,
)
from .encoders import CayleyEncoder, EncoderConfig, FcEncoder, SetEncoder
from .errors import (
    IlseError,
    InvalidArgument,
    InvalidState,
    NumericFailure,
    SearchFailure,
    UndefinedCorrelation,
)
from .nn import Linear, ParamStore, pearson, spearman
from .rng import stream

METHODS = (
    "set",
    "fc-gin",
    "fc-gcn",
    "cayley-gin",
    "cayley-gcn",
    "last-layer",
    "best-layer",
    "weighted",
    "mlp-last",
    "mlp-best",
    "dwatt",
)
ILSE_METHODS = ("set", "fc-gin", "fc-gcn", "cayley-gin", "cayley-gcn")

_BASELINE_BY_METHOD = {
    "last-layer": "last_layer",
    "best-layer": "best_layer",
    "weighted": "weighted",
    "mlp-last": "mlp_last",
    "mlp-best": "mlp_best",
    "dwatt": "dwatt",
}
_EVAL_CHUNK = 512


@dataclass
class TrainConfig:
    """One training run. Hyperparameter ranges mirror the experiment grids."""

    method: str
    lr: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.0
    batch_size: int | None = None  # defaults: 64 classification, 256 pairs
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    hidden: int = 256
    mpnn_layers: int = 1
    gin_mlp_depth: int = 1
    selected_layer: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r} (choose from {METHODS})")
        if not 1e-4 <= self.lr <= 1e-3:
            raise InvalidArgument(f"lr must be in [1e-4, 1e-3], got {self.lr}")
        if not 1e-4 <= self.weight_decay <= 1e-3:
            raise InvalidArgument(f"weight_decay must be in [1e-4, 1e-3], got {self.weight_decay}")
        if not 0.0 <= self.dropout <= 0.3:
            raise InvalidArgument(f"dropout must be in [0, 0.3], got {self.dropout}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgument("batch_size must be positive")
        if self.max_epochs < 0:
            raise InvalidArgument("max_epochs must be >= 0")
        if self.patience < 1:
            raise InvalidArgument("patience must be >= 1")
        if self.hidden < 1:
            raise InvalidArgument("hidden width must be positive")


@dataclass
class RunMetrics:
    method: str
    config: dict
    params: dict
    epochs: list = field(default_factory=list)
    val_best: float | None = None
    best_epoch: int | None = None
    test: float | None = None
    test_pearson: float | None = None  # pair tasks also report Pearson
    seed: int = 0
    wall_ms: float = 0.0
    failed: bool = False
    error: str | None = None
    chance_flag: bool = False
    checkpoint: dict | None = field(default=None, repr=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "config": self.config,
            "params": self.params,
            "epochs": self.epochs,
            "val_best": self.val_best,
            "best_epoch": self.best_epoch,
            "test": self.test,
            "test_pearson": self.test_pearson,
            "seed": self.seed,
            "failed": self.failed,
            "error": self.error,
            "chance_flag": self.chance_flag,
        }
        if include_timing:
            out["wall_ms"] = self.wall_ms
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2)


class Model:
    """Encoder plus optional linear classification head on one ParamStore."""

    def __init__(self, config: TrainConfig, num_layers: int, dim: int, n_classes: int | None):
        self.config = config
        self.store = ParamStore()
        self.encoder = _build_encoder(config, self.store, num_layers, dim)
        self.encoder_names = set(self.store.names())
        self.head = None
        if n_classes is not None:
            self.head = Linear(self.store, "head", self.encoder.out_dim, n_classes, config.seed)

    def encode(self, stacks, train=False, drop_rng=None) -> ad.Tensor:
        return self.encoder.encode(stacks, train=train, drop_rng=drop_rng)

    def logits(self, stacks, train=False, drop_rng=None) -> ad.Tensor:
        if self.head is None:
            raise InvalidState("model has no classification head")
        return self.head(self.encode(stacks, train=train, drop_rng=drop_rng))

    def param_counts(self) -> dict:
        encoder = sum(
            t.data.size for name, t in self.store.params.items() if name in self.encoder_names
        )
        total = self.store.n_params()
        return {"encoder": int(encoder), "head": int(total - encoder), "total": int(total)}


def _build_encoder(config: TrainConfig, store: ParamStore, num_layers: int, dim: int):
    method = config.method
    if method in ILSE_METHODS:
        kind = "set" if method == "set" else method.split("-")[0]
        enc_cfg = EncoderConfig(
            kind=kind,
            aggregation=method.split("-")[1] if "-" in method else "gin",
            mpnn_layers=config.mpnn_layers,
            hidden=config.hidden,
            gin_mlp_depth=config.gin_mlp_depth,
            dropout=config.dropout,
            seed=config.seed,
        )
        if kind == "set":
            return SetEncoder(store, enc_cfg, num_layers, dim)
        if kind == "fc":
            return FcEncoder(store, enc_cfg, num_layers, dim)
        return CayleyEncoder(store, enc_cfg, num_layers, dim)
    base_cfg = BaselineConfig(
        kind=_BASELINE_BY_METHOD[method],
        hidden=config.hidden,
        dropout=config.dropout,
        selected_layer=config.selected_layer,
        seed=config.seed,
    )
    cls = {
        "last_layer": LastLayerEncoder,
        "best_layer": BestLayerEncoder,
        "weighted": WeightedEncoder,
        "mlp_last": MlpBaselineEncoder,
        "mlp_best": MlpBaselineEncoder,
        "dwatt": DwattEncoder,
    }[base_cfg.kind]
    return cls(store, base_cfg, num_layers, dim)


def count_params(config: TrainConfig | str, num_layers: int, dim: int) -> int:
    """Trainable scalars added by the method's encoder (task head excluded)."""
    if isinstance(config, str):
        config = TrainConfig(method=config, selected_layer=0)
    elif config.method in ("best-layer", "mlp-best") and config.selected_layer is None:
        config = replace(config, selected_layer=0)
    store = ParamStore()
    _build_encoder(config, store, num_layers, dim)
    return store.n_params()


def _pair_cosines(model: Model, dataset: TaskDataset, idx: np.ndarray) -> np.ndarray:
    cos_parts = []
    for lo in range(0, idx.size, _EVAL_CHUNK):
        part = idx[lo : lo + _EVAL_CHUNK]
        ea = model.encode(dataset.stacks_a[part])
        eb = model.encode(dataset.stacks_b[part])
        cos_parts.append(ad.cosine(ea, eb).data)
    return np.concatenate(cos_parts)


def _evaluate(model: Model, dataset: TaskDataset, split: int) -> float:
    idx = dataset.indices(split)
    if idx.size == 0:
        raise InvalidArgument(f"empty {split} split")
    if dataset.kind == TASK_CLASSIFICATION:
        hits = 0
        for lo in range(0, idx.size, _EVAL_CHUNK):
            part = idx[lo : lo + _EVAL_CHUNK]
            logits = model.logits(dataset.stacks[part]).data
            hits += int((np.argmax(logits, axis=1) == dataset.labels[part]).sum())
        return hits / idx.size
    return spearman(_pair_cosines(model, dataset, idx), dataset.gold[idx])


def train(dataset: TaskDataset, config: TrainConfig) -> RunMetrics:
    """Mini-batch Adam with best-validation checkpointing and early stopping."""
    started = time.perf_counter()
    classification = dataset.kind == TASK_CLASSIFICATION
    n_classes = dataset.K if classification else None
    model = Model(config, dataset.L, dataset.d, n_classes)
    batch_size = config.batch_size or (64 if classification else 256)
    resolved = replace(config, batch_size=batch_size)

    metrics = RunMetrics(
        method=config.method,
        config=asdict(resolved),
        params=model.param_counts(),
        seed=config.seed,
    )
    train_idx = dataset.indices(SPLIT_TRAIN)
    shuffle_rng = stream(config.seed, "shuffle")
    drop_rng = stream(config.seed, "dropout")

    best_val = -np.inf
    best_epoch = None
    best_snap = model.store.snapshot()
    trainable = model.store.n_params() > 0 and train_idx.size > 0

    if trainable:
        for epoch in range(1, config.max_epochs + 1):
            order = train_idx[shuffle_rng.permutation(train_idx.size)]
            losses, weights = [], []
            try:
                for lo in range(0, order.size, batch_size):
                    part = order[lo : lo + batch_size]
                    if classification:
                        loss = ad.cross_entropy(
                            model.logits(dataset.stacks[part], train=True, drop_rng=drop_rng),
                            dataset.labels[part],
                        )
                    else:
                        ea = model.encode(dataset.stacks_a[part], train=True, drop_rng=drop_rng)
                        eb = model.encode(dataset.stacks_b[part], train=True, drop_rng=drop_rng)
                        loss = ad.cosine_mse(ea, eb, dataset.gold[part])
                    model.store.zero_grad()
                    loss.backward()
                    model.store.adam_step(config.lr, config.weight_decay)
                    losses.append(loss.item())
                    weights.append(part.size)
                val = _evaluate(model, dataset, SPLIT_VALIDATION)
            except (NumericFailure, UndefinedCorrelation) as exc:
                metrics.failed = True
                metrics.error = str(exc)
                break
            train_loss = float(np.average(losses, weights=weights))
            metrics.epochs.append({"epoch": epoch, "train_loss": train_loss, "val": val})
            if val > best_val:
                best_val = val
                best_epoch = epoch
                best_snap = model.store.snapshot()
            elif epoch - best_epoch >= config.patience:
                break

    model.store.restore(best_snap)
    if metrics.failed:
        metrics.val_best = None if best_epoch is None else float(best_val)
        metrics.best_epoch = best_epoch
    else:
        if best_epoch is None:
            best_val = _evaluate(model, dataset, SPLIT_VALIDATION)
        metrics.val_best = float(best_val)
        metrics.best_epoch = best_epoch
        metrics.test = float(_evaluate(model, dataset, SPLIT_TEST))
        if classification:
            metrics.chance_flag = metrics.val_best <= 1.0 / dataset.K + 0.02
        else:
            test_idx = dataset.indices(SPLIT_TEST)
            metrics.test_pearson = float(
                pearson(_pair_cosines(model, dataset, test_idx), dataset.gold[test_idx])
            )
    metrics.checkpoint = best_snap
    metrics.wall_ms = (time.perf_counter() - started) * 1e3
    return metrics


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in key insertion order (deterministic trace order)."""
    if not grid:
        return [{}]
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _pmap(fn, items: list, jobs: int) -> list:
    """Map ``fn`` over independent work items, optionally across processes.

    Results come back in submission order, so parallel execution cannot
    change any reported value. Each item owns its ParamStore; there is no
    shared mutable state between cells.
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _train_cell(item: tuple[TaskDataset, TrainConfig]) -> RunMetrics:
    dataset, config = item
    return train(dataset, config)


def grid_search(
    dataset: TaskDataset,
    config: TrainConfig,
    grid: dict[str, list] | None = None,
    jobs: int = 1,
) -> tuple[TrainConfig, RunMetrics, list[RunMetrics]]:
    """Train every grid point; pick the best validation score (ties: earlier)."""
    points = expand_grid(grid or {})
    if not points:
        raise InvalidArgument("grid must contain at least one point")
    candidates = [replace(config, **overrides) for overrides in points]
    trace = _pmap(_train_cell, [(dataset, c) for c in candidates], jobs)
    best = None
    best_config = None
    for candidate, metrics in zip(candidates, trace):
        if metrics.failed or metrics.val_best is None:
            continue
        if best is None or metrics.val_best > best.val_best:
            best = metrics
            best_config = candidate
    if best is None:
        raise SearchFailure("every grid point diverged")
    return best_config, best, trace


def _few_shot_cell(item: tuple[TaskDataset, TrainConfig, int, int]) -> float | None:
    dataset, config, k, seed = item
    try:
        sub = few_shot_subset(dataset, k, seed)
        metrics = train(sub, replace(config, seed=seed))
        if metrics.failed or metrics.test is None:
            return None
        return metrics.test
    except IlseError:
        return None


def few_shot_curve(
    dataset: TaskDataset,
    config: TrainConfig,
    ks: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024),
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
    jobs: int = 1,
) -> list[dict]:
    """Test score per (samples-per-label, seed); per-cell failures are recorded
    and do not abort the remaining cells."""
    if dataset.kind != TASK_CLASSIFICATION:
        raise InvalidArgument("few-shot curves are defined for classification tasks")
    cells = [(dataset, config, k, seed) for k in ks for seed in seeds]
    results = _pmap(_few_shot_cell, cells, jobs)
    rows = []
    for i, k in enumerate(ks):
        cell = results[i * len(seeds) : (i + 1) * len(seeds)]
        scores = [s for s in cell if s is not None]
        rows.append(
            {
                "k": k,
                "mean": float(np.mean(scores)) if scores else None,
                "std": float(np.std(scores)) if scores else None,
                "scores": scores,
                "failures": sum(1 for s in cell if s is None),
            }
        )
    return rows


def resolve_selected_layer(dataset: TaskDataset, config: TrainConfig, seed: int = 0) -> TrainConfig:
    """Fill ``selected_layer`` via a layer sweep when the method needs one."""
    if config.method in ("best-layer", "mlp-best") and config.selected_layer is None:
        _, best = layer_sweep(dataset, seed=seed)
        return replace(config, selected_layer=int(best))
    return config


def compare_methods(
    dataset: TaskDataset,
    methods: list[str | TrainConfig],
    grid: dict[str, list] | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> dict:
    """Grid-search every method and rank by test score."""
    rows = []
    for entry in methods:
        config = entry if isinstance(entry, TrainConfig) else TrainConfig(method=entry, seed=seed)
        config = resolve_selected_layer(dataset, config, seed=seed)
        best_config, best, trace = grid_search(dataset, config, grid, jobs=jobs)
        rows.append(
            {
                "method": config.method,
                "params": best.params["encoder"],
                "val": best.val_best,
                "test": best.test,
                "config": asdict(best_config),
                "grid_points": len(trace),
            }
        )
    rows.sort(key=lambda r: -(r["test"] if r["test"] is not None else -np.inf))
    return {"task": dataset.kind, "rows": rows}


def format_comparison(report: dict) -> str:
    """Stable aligned-text rendering of a compare_methods report."""
    headers = ("method", "params", "val", "test")
    lines = [[r["method"], str(r["params"]), f"{r['val']:.4f}", f"{r['test']:.4f}"] for r in report["rows"]]
    widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    out = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    out += [fmt.format(*row) for row in lines]
    return "\n".join(out)
