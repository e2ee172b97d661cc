"""Parameter store, Adam, MLP blocks, and evaluation statistics."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgument, InvalidState, UndefinedCorrelation
from .rng import stream


class ParamStore:
    """Named trainable tensors plus Adam moment state.

    Single-writer: the training loop owns mutation; forward passes only read.
    """

    def __init__(self):
        self.params: dict[str, ad.Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data: np.ndarray) -> ad.Tensor:
        if name in self.params:
            raise InvalidArgument(f"parameter {name!r} already exists")
        t = ad.Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def get_or_add(self, name: str, shape: tuple[int, ...], init_fn) -> ad.Tensor:
        """Fetch an existing parameter or create it via ``init_fn()``.

        Lets a module be rebuilt over a store that already holds its weights
        (checkpoint restore, repeated functional calls); shape mismatches are
        name collisions and raise.
        """
        if name in self.params:
            t = self.params[name]
            if t.data.shape != tuple(shape):
                raise InvalidArgument(
                    f"parameter {name!r} exists with shape {t.data.shape}, wanted {shape}"
                )
            return t
        return self.add(name, init_fn())

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def adam_step(
        self,
        lr: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        """Bias-corrected Adam with decoupled weight decay; zeroes gradients."""
        if lr <= 0:
            raise InvalidArgument(f"learning rate must be positive, got {lr}")
        self.step += 1
        bc1 = 1.0 - beta1**self.step
        bc2 = 1.0 - beta2**self.step
        for name, p in self.params.items():
            if p.grad is None:
                raise InvalidState(f"parameter {name!r} has no gradient")
            g = p.grad
            self.m[name] = beta1 * self.m[name] + (1.0 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1.0 - beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
            if weight_decay:
                p.data -= lr * weight_decay * p.data
        self.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        if set(snap) != set(self.params):
            raise InvalidArgument("snapshot names do not match store")
        for name, arr in snap.items():
            self.params[name].data = arr.copy()


def init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weight matrix."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    """y = x @ W + b over the trailing axis."""

    def __init__(self, store: ParamStore, prefix: str, fan_in: int, fan_out: int, seed: int):
        rng = stream(seed, "init", prefix)
        self.w = store.get_or_add(
            f"{prefix}.w", (fan_in, fan_out), lambda: init_weight(rng, fan_in, fan_out)
        )
        self.b = store.get_or_add(f"{prefix}.b", (fan_out,), lambda: np.zeros(fan_out))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)


class Mlp:
    """Stack of Linear layers with ReLU between them.

    ``widths`` chains consecutive layer sizes, e.g. (d, 256, 256) is a 2-layer
    MLP. The final layer has no activation. With a single pair of widths this
    degenerates to one linear map. Dropout, when configured, follows each
    hidden ReLU and only fires in training mode.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        widths: tuple[int, ...],
        seed: int,
        dropout: float = 0.0,
    ):
        if len(widths) < 2:
            raise InvalidArgument("an MLP needs at least input and output widths")
        if not 0.0 <= dropout <= 0.3:
            raise InvalidArgument(f"dropout must be in [0, 0.3], got {dropout}")
        self.layers = [
            Linear(store, f"{prefix}.{i}", widths[i], widths[i + 1], seed)
            for i in range(len(widths) - 1)
        ]
        self.dropout = dropout

    def __call__(
        self,
        x: ad.Tensor,
        train: bool = False,
        drop_rng: np.random.Generator | None = None,
    ) -> ad.Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = ad.relu(x)
                if self.dropout:
                    x = ad.dropout(x, self.dropout, drop_rng, train)
        return x


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions matching labels (ties to lowest index)."""
    preds = np.argmax(logits, axis=-1)
    return float(np.mean(preds == labels))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); tied values share the mean of their ranks."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise InvalidArgument("pearson needs two equal-length 1-D sequences of length >= 2")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sx = np.sqrt((xc**2).sum())
    sy = np.sqrt((yc**2).sum())
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelation("correlation undefined for constant input")
    return float((xc * yc).sum() / (sx * sy))


def spearman(xs, ys) -> float:
    """Pearson correlation of average-tie fractional ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise InvalidArgument("spearman needs two equal-length 1-D sequences of length >= 2")
    return pearson(_average_ranks(xs), _average_ranks(ys))
