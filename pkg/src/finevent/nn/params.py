"""Named parameter store with seeded initialization, plus Adam updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class MissingGradientError(RuntimeError):
    pass


class ParamStore:
    """Parameters keyed by unique names; iteration order is creation order.

    Matrices get uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)) from the
    store's seeded RNG; vectors start at zero.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, shape: tuple[int, ...]) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        if len(shape) >= 2:
            fan_in, fan_out = shape[0], shape[1]
            a = np.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-a, a, size=shape)
        else:
            data = np.zeros(shape)
        t = Tensor(data, check=False)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_entries(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            if p.grad is not None:
                p.grad[...] = 0.0

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            if name not in self._params:
                raise KeyError(f"unknown parameter {name!r}")
            p = self._params[name]
            if p.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            p.data = np.array(arr, dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.0005
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    frozen: set[str] = field(default_factory=set)


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One Adam update over every non-frozen parameter; the learning rate
    shrinks as lr / (1 + decay * step); gradients are zeroed afterward."""
    state.step += 1
    t = state.step
    eff_lr = state.lr / (1.0 + state.decay * t)
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in store.items():
        if name in state.frozen:
            if p.grad is not None:
                p.grad[...] = 0.0
            continue
        if p.grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= eff_lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        g[...] = 0.0


def load_word_vectors(path: str) -> dict[str, np.ndarray]:
    """GloVe-style text file: token followed by float components."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            vectors[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
    return vectors


def apply_word_vectors(table: Tensor, vocab: list[str], vectors: dict[str, np.ndarray]) -> int:
    """Overwrite the leading columns of matching rows with imported vectors;
    the remaining columns stay as their trainable initialization.  Returns the
    number of initialized rows."""
    if not vectors:
        return 0
    dim = len(next(iter(vectors.values())))
    if dim > table.data.shape[1]:
        raise ValueError(
            f"imported vectors ({dim}) wider than the embedding table ({table.data.shape[1]})"
        )
    hits = 0
    for row, token in enumerate(vocab):
        vec = vectors.get(token)
        if vec is not None:
            table.data[row, :dim] = vec
            hits += 1
    return hits
