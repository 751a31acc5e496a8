"""Reverse-mode autodiff over 64-bit numpy arrays.

Every op checks its result for NaN/Inf and registers a backward closure that
accumulates into its parents' ``grad`` buffers.  ``backward`` walks the graph
once in reverse topological order.  ``no_grad`` disables graph construction
for cheap re-evaluation (finite-difference probes, inference).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


def _all_finite(arr: np.ndarray) -> bool:
    # A NaN/Inf anywhere poisons the sum; cheaper than isfinite().all().
    return math.isfinite(float(arr.sum()))


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn")

    def __init__(self, data, check: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        # Finite-value enforcement guards training; no_grad re-evaluation
        # (inference, finite-difference probes) checks the final loss instead.
        if check and _GRAD_ENABLED and not _all_finite(arr):
            raise NonFiniteError("tensor holds NaN/Inf")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def constant(data) -> Tensor:
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), check=False)


def _attach(out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _GRAD_ENABLED:
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's grad."""
    if loss.data.shape != ():
        raise ShapeError("backward starts from a scalar loss")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.ensure_grad()
    loss.grad += 1.0
    for node in reversed(topo):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


# ---------------------------------------------------------------------------
# Primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim != 2 or a.data.ndim not in (1, 2) or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        if a.data.ndim == 2:
            a.ensure_grad()
            a.grad += g @ b.data.T
            b.ensure_grad()
            b.grad += a.data.T @ g
        else:
            a.ensure_grad()
            a.grad += g @ b.data.T
            b.ensure_grad()
            b.grad += np.outer(a.data, g)

    return _attach(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    bias = False
    if a.data.shape != b.data.shape:
        if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
            bias = True  # row-broadcast bias, the only broadcast the models need
        else:
            raise ShapeError(f"add {a.shape} + {b.shape}")
    out = Tensor(a.data + b.data)

    def bwd(g):
        a.ensure_grad()
        a.grad += g
        b.ensure_grad()
        b.grad += g.sum(axis=0) if bias else g

    return _attach(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub {a.shape} - {b.shape}")
    out = Tensor(a.data - b.data)

    def bwd(g):
        a.ensure_grad()
        a.grad += g
        b.ensure_grad()
        b.grad -= g

    return _attach(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data)

    def bwd(g):
        a.ensure_grad()
        a.grad += g * b.data
        b.ensure_grad()
        b.grad += g * a.data

    return _attach(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)

    def bwd(g):
        a.ensure_grad()
        a.grad += g * c

    return _attach(out, (a,), bwd)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    if axis != -1:
        raise ShapeError("concat supports the last axis only")
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))
    widths = [p.data.shape[-1] for p in parts]

    def bwd(g):
        offset = 0
        for p, w in zip(parts, widths):
            p.ensure_grad()
            p.grad += g[..., offset : offset + w]
            offset += w

    return _attach(out, tuple(parts), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    out = Tensor(a.data.T)

    def bwd(g):
        a.ensure_grad()
        a.grad += g.T

    return _attach(out, (a,), bwd)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        a.ensure_grad()
        a.grad += y * (g - (g * y).sum(axis=-1, keepdims=True))

    return _attach(out, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    # exp overflow saturates to 0/1 exactly in IEEE; no NaN can appear.
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)

    def bwd(g):
        a.ensure_grad()
        a.grad += g * y * (1.0 - y)

    return _attach(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def bwd(g):
        a.ensure_grad()
        a.grad += g * (1.0 - y * y)

    return _attach(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def bwd(g):
        a.ensure_grad()
        a.grad += g * mask

    return _attach(out, (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    """Sum every entry to a scalar."""
    out = Tensor(a.data.sum())

    def bwd(g):
        a.ensure_grad()
        a.grad += g

    return _attach(out, (a,), bwd)


def mean_pool(a: Tensor) -> Tensor:
    """Mean over the sequence axis (axis 0): (L, K) -> (K,)."""
    if a.data.ndim != 2:
        raise ShapeError("mean_pool expects a matrix")
    n = a.data.shape[0]
    out = Tensor(a.data.mean(axis=0))

    def bwd(g):
        a.ensure_grad()
        a.grad += g[None, :] / n

    return _attach(out, (a,), bwd)


def embedding(table: Tensor, ids) -> Tensor:
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("embedding ids must be a flat sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError("embedding id out of range")
    out = Tensor(table.data[idx])

    def bwd(g):
        table.ensure_grad()
        np.add.at(table.grad, idx, g)

    return _attach(out, (table,), bwd)


def dropout(a: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} outside [0, 1)")
    if rng is None:
        raise ValueError("training-mode dropout needs an RNG")
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    out = Tensor(a.data * mask)

    def bwd(g):
        a.ensure_grad()
        a.grad += g * mask

    return _attach(out, (a,), bwd)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log-softmax of the target class; stable in log space."""
    x = logits.data
    if x.ndim != 1:
        raise ShapeError("cross_entropy expects a logit vector")
    if not 0 <= target < x.shape[0]:
        raise ShapeError(f"target {target} outside {x.shape[0]} classes")
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    out = Tensor(lse - x[target])

    def bwd(g):
        logits.ensure_grad()
        probs = np.exp(x - lse)
        probs[target] -= 1.0
        logits.grad += g * probs

    return _attach(out, (logits,), bwd)


def sequence_cross_entropy(emissions: Tensor, targets) -> Tensor:
    """Sum of per-position cross-entropies over an (L, K) score matrix."""
    idx = np.asarray(targets, dtype=np.intp)
    x = emissions.data
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError("sequence_cross_entropy expects (L, K) scores and L targets")
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    rows = np.arange(x.shape[0])
    out = Tensor((lse - x[rows, idx]).sum())

    def bwd(g):
        emissions.ensure_grad()
        probs = np.exp(x - lse[:, None])
        probs[rows, idx] -= 1.0
        emissions.grad += g * probs

    return _attach(out, (emissions,), bwd)
