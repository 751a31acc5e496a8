"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import NonFiniteError, Tensor, backward, no_grad

SUBSAMPLE_THRESHOLD = 10_000


def grad_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    subsample_seed: int = 0,
) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``loss_fn`` must be deterministic (dropout off).  Every parameter entry is
    probed unless the store holds more than 10k entries, in which case a
    seeded random subsample of that size is used.
    """
    store.zero_grads()
    loss = loss_fn()
    if loss.data.shape != ():
        raise ValueError("grad_check needs a scalar loss")
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in store.items()
    }

    entries: list[tuple[str, int]] = []
    for name, p in store.items():
        entries.extend((name, i) for i in range(p.data.size))
    if len(entries) > SUBSAMPLE_THRESHOLD:
        rng = np.random.default_rng(subsample_seed)
        picks = rng.choice(len(entries), size=SUBSAMPLE_THRESHOLD, replace=False)
        entries = [entries[i] for i in sorted(picks)]

    max_rel = 0.0
    with no_grad():
        for name, idx in entries:
            flat = store[name].data.reshape(-1)
            old = flat[idx]
            flat[idx] = old + eps
            lp = loss_fn().item()
            flat[idx] = old - eps
            lm = loss_fn().item()
            flat[idx] = old
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NonFiniteError(f"non-finite loss probing {name}[{idx}]")
            fd = (lp - lm) / (2.0 * eps)
            ad = analytic[name].reshape(-1)[idx]
            rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return max_rel
