"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array plus the closure that routes its gradient to its
parents. Building an expression records the op graph; ``backward()`` on a
scalar loss walks it once in reverse topological order. The op set is exactly
what the encoders and baselines need (dense linear algebra, pointwise
nonlinearities, reductions, graph edge aggregation, cosine, the two losses);
there is deliberately no general broadcasting calculus beyond what those ops
use.

Every op checks its result for non-finite values and raises NumericFailure
naming the op, so divergence surfaces at the step that produced it.
Forward passes are pure functions of (inputs, parameters, rng state): two
runs from the same state are bit-identical.
"""

from __future__ import annotations

import numpy as np

from ._kernels import edge_gather_sum
from .errors import InvalidArgument, NumericFailure

FINITE_CHECKS = True


class Tensor:
    """A float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: callers may hand us a shared or broadcast view
            self.grad = np.array(g, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise InvalidArgument(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar; the named functions below are the actual implementation
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NumericFailure("non-finite values in forward result", op=op)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes that broadcasting expanded relative to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise InvalidArgument("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise InvalidArgument(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    k, m = b.data.shape[-2], b.data.shape[-1]
    if b.data.ndim == 2:
        # dominant layout: (..., k) @ (k, m) flattens to one GEMM, and the
        # weight gradient reduces over the flattened leading axes directly
        # instead of materializing a batched (..., k, m) intermediate
        a2 = a.data.reshape(-1, k)
        data = (a2 @ b.data).reshape(*a.data.shape[:-1], m)

        def backward(g):
            g2 = g.reshape(-1, m)
            if a.requires_grad:
                a._accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(a2.T @ g2)

    else:
        data = np.matmul(a.data, b.data)

        def backward(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accumulate(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accumulate(_unbroadcast(gb, b.shape))

    return _result(data, (a, b), backward, "matmul")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0  # subgradient at exactly 0 is 0 by convention
    data = np.where(mask, a.data, 0.0)

    def backward(g):
        a._accumulate(g * mask)

    return _result(data, (a,), backward, "relu")


def log(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _result(data, (a,), backward, "log")


def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _result(data, (a,), backward, "sum")


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    if count == 0:
        raise InvalidArgument("mean over an empty axis")
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / count)

    return _result(data, (a,), backward, "mean")


def pool_mean(a, axis: int = 1) -> Tensor:
    """Mean along ``axis`` with per-coordinate ascending summation order.

    Sorting each coordinate's values before the (sequential) sum fixes a
    canonical addition order, so the result is bitwise invariant to
    permutations along the pooled axis. The gradient of a mean is uniform and
    does not depend on the order.
    """
    a = _as_tensor(a)
    count = a.data.shape[axis]
    if count == 0:
        raise InvalidArgument("pool_mean over an empty axis")
    data = np.sort(a.data, axis=axis).sum(axis=axis) / count

    def backward(g):
        g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape) / count)

    return _result(data, (a,), backward, "pool_mean")


def pool_sum(a, axis: int = 1) -> Tensor:
    """Sum along ``axis`` in per-coordinate ascending order (see pool_mean)."""
    a = _as_tensor(a)
    data = np.sort(a.data, axis=axis).sum(axis=axis)

    def backward(g):
        g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _result(data, (a,), backward, "pool_sum")


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        y = data
        a._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _result(data, (a,), backward, "softmax")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _result(data, tuple(tensors), backward, "concat")


def take_nodes(a, idx: np.ndarray) -> Tensor:
    """Select rows along axis 1: (B, N, w) -> (B, len(idx), w). ``idx`` must be unique."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise InvalidArgument("take_nodes requires unique indices")
    data = a.data[:, idx, :]

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[:, idx, :] = g
        a._accumulate(buf)

    return _result(data, (a,), backward, "take_nodes")


def scatter_nodes(a, idx: np.ndarray, n_nodes: int) -> Tensor:
    """Place rows (B, L, w) at positions ``idx`` of a zero (B, n_nodes, w) array.

    The inverse of take_nodes; the zero rows are exact zeros, independent of
    any parameters (virtual-node initialization).
    """
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise InvalidArgument("scatter_nodes requires unique indices")
    if a.data.shape[1] != len(idx):
        raise InvalidArgument("scatter_nodes: row count does not match index count")
    batch, _, width = a.data.shape
    data = np.zeros((batch, n_nodes, width))
    data[:, idx, :] = a.data

    def backward(g):
        a._accumulate(g[:, idx, :])

    return _result(data, (a,), backward, "scatter_nodes")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(data, (a,), backward, "reshape")


def neighbor_sum(a, indptr: np.ndarray, indices: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Edge aggregation out[b, v] = sum over neighbors u of w_uv * a[b, u].

    The CSR structure must describe a symmetric operator (undirected edges,
    symmetric weights): the backward pass reuses the same structure, which is
    only the transpose under that symmetry. Graph construction upholds this.
    """
    a = _as_tensor(a)
    if a.data.ndim != 3:
        raise InvalidArgument("neighbor_sum expects (batch, nodes, width)")
    if indptr.shape[0] != a.data.shape[1] + 1:
        raise InvalidArgument("neighbor_sum: indptr does not match node count")
    h = np.ascontiguousarray(a.data)
    out = np.empty_like(h)
    edge_gather_sum(h, indptr, indices, weights, out)

    def backward(g):
        gin = np.empty_like(h)
        edge_gather_sum(np.ascontiguousarray(g), indptr, indices, weights, gin)
        a._accumulate(gin)

    return _result(out, (a,), backward, "neighbor_sum")


def cosine(u, v) -> Tensor:
    """Row-wise cosine similarity of (B, d) against (B, d), returning (B,)."""
    u, v = _as_tensor(u), _as_tensor(v)
    if u.shape != v.shape or u.data.ndim != 2:
        raise InvalidArgument(f"cosine expects matching (B, d) inputs, got {u.shape}, {v.shape}")
    with np.errstate(over="ignore", invalid="ignore"):  # _result flags non-finite
        nu = np.sqrt((u.data**2).sum(axis=1))
        nv = np.sqrt((v.data**2).sum(axis=1))
        if np.any(nu == 0.0) or np.any(nv == 0.0):
            raise NumericFailure("zero-norm input", op="cosine")
        data = (u.data * v.data).sum(axis=1) / (nu * nv)

    def backward(g):
        cos = data
        if u.requires_grad:
            u._accumulate(g[:, None] * (v.data / (nu * nv)[:, None] - cos[:, None] * u.data / (nu**2)[:, None]))
        if v.requires_grad:
            v._accumulate(g[:, None] * (u.data / (nu * nv)[:, None] - cos[:, None] * v.data / (nv**2)[:, None]))

    return _result(data, (u, v), backward, "cosine")


def dropout(a, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-rate) at train time.

    Identity in evaluation mode or at rate 0; the mask is a constant with no
    gradient of its own.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidArgument(f"dropout rate must be in [0, 1), got {rate}")
    a = _as_tensor(a)
    if not training or rate == 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(mask))


def cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of (B, K) logits against integer labels (B,).

    Log-softmax uses max subtraction; the gradient is (softmax - onehot) / B.
    A 1-D logits vector with a scalar label is treated as a batch of one.
    """
    logits = _as_tensor(logits)
    squeeze = logits.data.ndim == 1
    data2 = logits.data[None, :] if squeeze else logits.data
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch, k = data2.shape
    if k < 2:
        raise InvalidArgument(f"cross_entropy needs at least 2 classes, got {k}")
    if labels.shape != (batch,):
        raise InvalidArgument(f"labels shape {labels.shape} does not match batch {batch}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise InvalidArgument(f"label out of range [0, {k})")
    shifted = data2 - data2.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(batch), labels]
    data = np.mean(logz - picked)

    def backward(g):
        sm = np.exp(shifted)
        sm /= sm.sum(axis=1, keepdims=True)
        sm[np.arange(batch), labels] -= 1.0
        glogits = sm * (float(g) / batch)
        logits._accumulate(glogits[0] if squeeze else glogits)

    return _result(data, (logits,), backward, "cross_entropy")


def cosine_mse(u, v, gold) -> Tensor:
    """Mean of ((1 + cos(u, v)) / 2 - gold)^2 over the batch.

    Predictions map cosine from [-1, 1] onto [0, 1] to match gold scores.
    """
    gold = np.atleast_1d(np.asarray(gold, dtype=np.float64))
    u, v = _as_tensor(u), _as_tensor(v)
    if u.data.ndim == 1:
        u, v = reshape(u, (1, -1)), reshape(v, (1, -1))
    pred = add(mul(cosine(u, v), 0.5), 0.5)
    diff = sub(pred, Tensor(gold))
    return mean(mul(diff, diff))
