"""Datasets: the LREP binary format, planted-signal synthesis, few-shot subsets.

LREP layout (little-endian):
    magic  4 bytes  b"LREP"
    u32    version (1)
    u8     task kind: 0 = classification, 1 = pair regression
    u32    L, u32 d, u32 K (0 for pair), u64 N
    then N example records:
        classification: L*d float32, u32 label, u8 split tag
        pair:           2*L*d float32, float32 gold, u8 split tag
Split tags: 0 = train, 1 = validation, 2 = test.

Stacks are float32 on disk and float64 in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .rng import stream

MAGIC = b"LREP"
VERSION = 1
TASK_CLASSIFICATION = "classification"
TASK_PAIR = "pair"
_KIND_CODE = {TASK_CLASSIFICATION: 0, TASK_PAIR: 1}
_KIND_NAME = {0: TASK_CLASSIFICATION, 1: TASK_PAIR}

SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = {SPLIT_TRAIN: "train", SPLIT_VALIDATION: "validation", SPLIT_TEST: "test"}

_HEADER = struct.Struct("<4sIBIIIQ")


@dataclass
class TaskDataset:
    """Labeled stacks (classification) or scored stack pairs (pair regression)."""

    kind: str
    L: int
    d: int
    K: int
    splits: np.ndarray
    stacks: np.ndarray | None = None
    labels: np.ndarray | None = None
    stacks_a: np.ndarray | None = None
    stacks_b: np.ndarray | None = None
    gold: np.ndarray | None = None

    def __post_init__(self):
        self.splits = np.asarray(self.splits, dtype=np.uint8)
        self.validate()

    @property
    def n_examples(self) -> int:
        return len(self.splits)

    def indices(self, split: int) -> np.ndarray:
        return np.flatnonzero(self.splits == split)

    def split_sizes(self) -> dict[str, int]:
        return {name: int((self.splits == tag).sum()) for tag, name in SPLIT_NAMES.items()}

    def validate(self) -> None:
        n = self.n_examples
        if self.kind == TASK_CLASSIFICATION:
            if self.stacks is None or self.labels is None:
                raise InvalidArgument("classification dataset needs stacks and labels")
            self.stacks = np.asarray(self.stacks, dtype=np.float64)
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.stacks.shape != (n, self.L, self.d):
                raise InvalidArgument(f"stacks shape {self.stacks.shape} != {(n, self.L, self.d)}")
            if self.labels.shape != (n,):
                raise InvalidArgument("one label per example required")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.K):
                raise InvalidArgument(f"labels must lie in [0, {self.K})")
            arrays = (self.stacks,)
        elif self.kind == TASK_PAIR:
            if self.stacks_a is None or self.stacks_b is None or self.gold is None:
                raise InvalidArgument("pair dataset needs both stacks and gold scores")
            self.stacks_a = np.asarray(self.stacks_a, dtype=np.float64)
            self.stacks_b = np.asarray(self.stacks_b, dtype=np.float64)
            self.gold = np.asarray(self.gold, dtype=np.float64)
            for s in (self.stacks_a, self.stacks_b):
                if s.shape != (n, self.L, self.d):
                    raise InvalidArgument(f"stacks shape {s.shape} != {(n, self.L, self.d)}")
            if self.gold.shape != (n,):
                raise InvalidArgument("one gold score per pair required")
            if n and (self.gold.min() < 0.0 or self.gold.max() > 1.0):
                raise InvalidArgument("gold scores must lie in [0, 1]")
            if self.K != 0:
                raise InvalidArgument("pair datasets carry K = 0")
            arrays = (self.stacks_a, self.stacks_b, self.gold)
        else:
            raise InvalidArgument(f"unknown task kind {self.kind!r}")
        if self.splits.shape != (n,):
            raise InvalidArgument("one split tag per example required")
        if n and self.splits.max() > SPLIT_TEST:
            raise InvalidArgument("split tags must be 0 (train), 1 (validation) or 2 (test)")
        for arr in arrays:
            if arr.size and not np.all(np.isfinite(arr)):
                raise InvalidArgument("dataset contains non-finite values")

    def subset(self, index: np.ndarray) -> "TaskDataset":
        """Dataset restricted to ``index`` (kept in the given order)."""
        index = np.asarray(index, dtype=np.int64)
        common = dict(kind=self.kind, L=self.L, d=self.d, K=self.K, splits=self.splits[index])
        if self.kind == TASK_CLASSIFICATION:
            return TaskDataset(**common, stacks=self.stacks[index], labels=self.labels[index])
        return TaskDataset(
            **common,
            stacks_a=self.stacks_a[index],
            stacks_b=self.stacks_b[index],
            gold=self.gold[index],
        )


def _record_dtype(kind: str, L: int, d: int) -> np.dtype:
    if kind == TASK_CLASSIFICATION:
        return np.dtype([("stack", "<f4", (L, d)), ("label", "<u4"), ("split", "u1")])
    return np.dtype(
        [("stack_a", "<f4", (L, d)), ("stack_b", "<f4", (L, d)), ("gold", "<f4"), ("split", "u1")]
    )


def _as_f32(arr: np.ndarray) -> np.ndarray:
    out = arr.astype("<f4")
    if out.size and not np.all(np.isfinite(out)):
        raise InvalidArgument("dataset values exceed the float32 range of the file format")
    return out


def write_lrep(path, dataset: TaskDataset) -> None:
    dataset.validate()
    rec = np.zeros(dataset.n_examples, dtype=_record_dtype(dataset.kind, dataset.L, dataset.d))
    if dataset.kind == TASK_CLASSIFICATION:
        rec["stack"] = _as_f32(dataset.stacks)
        rec["label"] = dataset.labels.astype("<u4")
    else:
        rec["stack_a"] = _as_f32(dataset.stacks_a)
        rec["stack_b"] = _as_f32(dataset.stacks_b)
        rec["gold"] = dataset.gold.astype("<f4")
    rec["split"] = dataset.splits
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        _KIND_CODE[dataset.kind],
        dataset.L,
        dataset.d,
        dataset.K,
        dataset.n_examples,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rec.tobytes())


def read_lrep(path) -> TaskDataset:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("file shorter than the header", offset=len(blob))
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}", offset=0)
    magic, version, kind_code, L, d, K, n = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if kind_code not in _KIND_NAME:
        raise FormatError(f"unknown task kind code {kind_code}", offset=8)
    kind = _KIND_NAME[kind_code]
    if L < 1 or d < 1:
        raise FormatError(f"degenerate dimensions L={L}, d={d}", offset=9)
    dtype = _record_dtype(kind, L, d)
    expected = _HEADER.size + n * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(
            f"payload is {len(blob) - _HEADER.size} bytes, expected {n} records of {dtype.itemsize}",
            offset=min(len(blob), expected),
        )
    rec = np.frombuffer(blob, dtype=dtype, count=n, offset=_HEADER.size)
    if kind == TASK_CLASSIFICATION:
        stacks = rec["stack"]
        bad = ~np.isfinite(stacks).reshape(n, -1).all(axis=1) if n else np.zeros(0, bool)
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise FormatError(
                f"non-finite stack values in record {first}",
                offset=_HEADER.size + first * dtype.itemsize,
            )
        dataset = TaskDataset(
            kind=kind,
            L=L,
            d=d,
            K=K,
            splits=rec["split"].copy(),
            stacks=stacks.astype(np.float64),
            labels=rec["label"].astype(np.int64),
        )
    else:
        both = np.concatenate([rec["stack_a"].reshape(n, -1), rec["stack_b"].reshape(n, -1)], axis=1) if n else np.zeros((0, 1))
        gold = rec["gold"].astype(np.float64)
        bad = ~(np.isfinite(both).all(axis=1) & np.isfinite(gold)) if n else np.zeros(0, bool)
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise FormatError(
                f"non-finite values in record {first}",
                offset=_HEADER.size + first * dtype.itemsize,
            )
        dataset = TaskDataset(
            kind=kind,
            L=L,
            d=d,
            K=K,
            splits=rec["split"].copy(),
            stacks_a=rec["stack_a"].astype(np.float64),
            stacks_b=rec["stack_b"].astype(np.float64),
            gold=gold,
        )
    return dataset


@dataclass
class SynthSpec:
    """Planted-signal synthetic data: task signal injected at one known layer.

    Class (or pair-similarity) information enters layer ``planted_layer`` at
    strength ``snr`` and bleeds into layer l at strength
    ``snr * leakage**|l - planted_layer|``. Per-layer rows are means over
    ``tokens_per_example`` simulated token draws, so pooled-noise statistics
    match what mean pooling produces.
    """

    task: str = TASK_CLASSIFICATION
    n_examples: int = 900
    L: int = 12
    d: int = 32
    K: int = 6
    tokens_per_example: int = 4
    planted_layer: int | None = None  # defaults to the middle layer
    snr: float = 4.0
    leakage: float = 0.3
    seed: int = 0
    train_frac: float = 0.70
    val_frac: float = 0.15

    def __post_init__(self):
        if self.task not in (TASK_CLASSIFICATION, TASK_PAIR):
            raise InvalidArgument(f"unknown task {self.task!r}")
        if self.planted_layer is None:
            self.planted_layer = self.L // 2
        if not 0 <= self.planted_layer < self.L:
            raise InvalidArgument(f"planted layer {self.planted_layer} outside [0, {self.L})")
        if self.snr < 0:
            raise InvalidArgument("snr must be nonnegative")
        if not 0.0 <= self.leakage < 1.0:
            raise InvalidArgument("leakage must lie in [0, 1)")
        if self.task == TASK_CLASSIFICATION and self.K > self.d:
            raise InvalidArgument(f"{self.K} orthogonal class directions need d >= K, got d={self.d}")
        if self.task == TASK_CLASSIFICATION and self.K < 2:
            raise InvalidArgument("classification needs at least 2 classes")
        if self.n_examples < 1 or self.L < 1 or self.d < 1 or self.tokens_per_example < 1:
            raise InvalidArgument("n_examples, L, d and tokens_per_example must be positive")
        if not (0 < self.train_frac < 1 and 0 <= self.val_frac < 1 and self.train_frac + self.val_frac <= 1):
            raise InvalidArgument("split fractions must be positive and sum to at most 1")


def _signal_profile(spec: SynthSpec) -> np.ndarray:
    dist = np.abs(np.arange(spec.L) - spec.planted_layer).astype(np.float64)
    return spec.snr * spec.leakage**dist  # leakage**0 == 1 at the planted layer


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer allocation of ``total`` proportional to ``weights`` (exact sum)."""
    exact = weights * total / weights.sum()
    alloc = np.floor(exact).astype(np.int64)
    remainder = exact - alloc
    short = total - alloc.sum()
    for idx in np.argsort(-remainder, kind="stable")[:short]:
        alloc[idx] += 1
    return alloc


def _stratified_splits(labels: np.ndarray, n_classes: int, spec: SynthSpec, rng) -> np.ndarray:
    n = len(labels)
    n_train = int(round(spec.train_frac * n))
    n_val = int(round(spec.val_frac * n))
    counts = np.bincount(labels, minlength=n_classes)
    train_alloc = _largest_remainder(n_train, counts.astype(np.float64))
    val_alloc = _largest_remainder(n_val, counts.astype(np.float64))
    splits = np.full(n, SPLIT_TEST, dtype=np.uint8)
    for cls in range(n_classes):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        t, v = train_alloc[cls], val_alloc[cls]
        splits[members[:t]] = SPLIT_TRAIN
        splits[members[t : t + v]] = SPLIT_VALIDATION
    return splits


def generate_synthetic(spec: SynthSpec) -> TaskDataset:
    """Deterministic planted-signal dataset; identical seed, identical bytes."""
    rng = stream(spec.seed, "synth")
    profile = _signal_profile(spec)[None, :, None]  # (1, L, 1)
    n, L, d, T = spec.n_examples, spec.L, spec.d, spec.tokens_per_example

    if spec.task == TASK_CLASSIFICATION:
        # balanced classes by construction (remainder spread over low classes),
        # so stratified splits can hit exact requested sizes
        base = np.arange(n) % spec.K
        labels = base[rng.permutation(n)].astype(np.int64)
        directions = np.linalg.qr(rng.standard_normal((d, spec.K)))[0].T  # (K, d) orthonormal
        signal = profile * directions[labels][:, None, :]  # (n, L, d)
        stacks = signal + rng.standard_normal((n, L, T, d)).mean(axis=2)
        splits = _stratified_splits(labels, spec.K, spec, rng)
        return TaskDataset(
            kind=TASK_CLASSIFICATION, L=L, d=d, K=spec.K, splits=splits, stacks=stacks, labels=labels
        )

    cos_target = rng.uniform(-1.0, 1.0, size=n)
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = rng.standard_normal((n, d))
    w -= (w * u).sum(axis=1, keepdims=True) * u
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    v = cos_target[:, None] * u + np.sqrt(1.0 - cos_target[:, None] ** 2) * w
    stacks_a = profile * u[:, None, :] + rng.standard_normal((n, L, T, d)).mean(axis=2)
    stacks_b = profile * v[:, None, :] + rng.standard_normal((n, L, T, d)).mean(axis=2)
    gold = (1.0 + cos_target) / 2.0
    n_train = int(round(spec.train_frac * n))
    n_val = int(round(spec.val_frac * n))
    splits = np.full(n, SPLIT_TEST, dtype=np.uint8)
    order = rng.permutation(n)
    splits[order[:n_train]] = SPLIT_TRAIN
    splits[order[n_train : n_train + n_val]] = SPLIT_VALIDATION
    return TaskDataset(
        kind=TASK_PAIR, L=L, d=d, K=0, splits=splits, stacks_a=stacks_a, stacks_b=stacks_b, gold=gold
    )


def few_shot_subset(dataset: TaskDataset, k: int, seed: int) -> TaskDataset:
    """Keep at most ``k`` seeded train examples per label; other splits intact.

    Selection takes the first min(k, available) entries of a per-class seeded
    shuffle, so subsets are nested across k under the same seed.
    """
    if dataset.kind != TASK_CLASSIFICATION:
        raise InvalidArgument("few-shot subsets are defined per label (classification only)")
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    keep = np.zeros(dataset.n_examples, dtype=bool)
    keep[dataset.splits != SPLIT_TRAIN] = True
    train_idx = dataset.indices(SPLIT_TRAIN)
    for cls in range(dataset.K):
        members = train_idx[dataset.labels[train_idx] == cls]
        perm = stream(seed, "fewshot", cls).permutation(len(members))
        keep[members[perm[: min(k, len(members))]]] = True
    return dataset.subset(np.flatnonzero(keep))
