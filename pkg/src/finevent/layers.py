"""Differentiable building blocks for the stock prediction models:
bilinear self-attention, tensor fusion, co-attention, gated sum, and a
linear-chain CRF (forward-algorithm NLL + Viterbi decoding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.tensor import (
    ShapeError,
    Tensor,
    _attach,
    add,
    concat,
    matmul,
    mul,
    relu,
    sigmoid,
    softmax,
    sub,
    tanh,
    transpose,
)


def self_attention(H: Tensor, W1: Tensor) -> Tensor:
    """Bilinear self-attention: rows of softmax(H W1 H^T) reweight H."""
    scores = matmul(matmul(H, W1), transpose(H))
    A = softmax(scores)
    return matmul(A, H)


def fuse(S: Tensor, E: Tensor, Wf: Tensor, bf: Tensor) -> Tensor:
    """Per-position fusion tanh(Wf [S; E; S-E; S*E] + bf).

    S and E must share their width (event embeddings are sized 2h for this).
    """
    if S.data.shape != E.data.shape:
        raise ShapeError(f"fusion inputs differ: {S.shape} vs {E.shape}")
    stacked = concat([S, E, sub(S, E), mul(S, E)])
    return tanh(add(matmul(stacked, Wf), bf))


def co_attention(Hx: Tensor, Sy: Tensor, W2: Tensor) -> tuple[Tensor, Tensor]:
    """Bi-modal interaction.  f(i,j) = relu(hx_i^T W2 sy_j); alpha rows
    (over stock steps) rebuild the text side, beta columns (over tokens)
    rebuild the stock side."""
    f = relu(matmul(matmul(Hx, W2), transpose(Sy)))  # (L, T)
    alpha = softmax(f)  # row-normalized over T
    beta = transpose(softmax(transpose(f)))  # column-normalized over L
    Cx = matmul(alpha, Sy)
    Cy = matmul(transpose(beta), Hx)
    return Cx, Cy


def gated_sum(H: Tensor, C: Tensor, Wg: Tensor, bg: Tensor) -> Tensor:
    """g = sigmoid(Wg [H; C] + bg); returns g*C + (1-g)*H elementwise."""
    if H.data.shape != C.data.shape:
        raise ShapeError(f"gated_sum inputs differ: {H.shape} vs {C.shape}")
    g = sigmoid(add(matmul(concat([H, C]), Wg), bg))
    ones = Tensor(np.ones_like(g.data), check=False)
    return add(mul(g, C), mul(sub(ones, g), H))


# ---------------------------------------------------------------------------
# Linear-chain CRF


@dataclass
class CrfParams:
    transitions: Tensor  # (K, K) score for label i -> label j
    start_scores: Tensor  # (K,)

    @property
    def n_labels(self) -> int:
        return self.start_scores.data.shape[0]

    def check(self) -> None:
        k = self.n_labels
        if self.transitions.data.shape != (k, k):
            raise ShapeError("CRF transition matrix must be square over the alphabet")


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def crf_nll(emissions: Tensor, gold, p: CrfParams) -> Tensor:
    """Sequence negative log-likelihood: log Z - score(gold).

    log Z runs the forward algorithm in log space; the backward pass uses
    forward-backward marginals (unary for emissions/start, pairwise for
    transitions) minus the gold counts.
    """
    p.check()
    em = emissions.data
    L, K = em.shape
    gold = np.asarray(gold, dtype=np.intp)
    if gold.shape != (L,):
        raise ShapeError("gold length must match emissions")
    if gold.size and (gold.min() < 0 or gold.max() >= K):
        raise ValueError("gold label id outside the alphabet")
    trans = p.transitions.data
    start = p.start_scores.data

    alpha = np.empty((L, K))
    alpha[0] = start + em[0]
    for t in range(1, L):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + em[t]
    log_z = _logsumexp(alpha[L - 1], axis=0)

    gold_score = start[gold[0]] + em[np.arange(L), gold].sum()
    if L > 1:
        gold_score += trans[gold[:-1], gold[1:]].sum()

    loss = log_z - gold_score
    if loss < -1e-9:
        raise ArithmeticError(f"CRF NLL {loss} below numeric tolerance")
    out = Tensor(loss)

    def bwd(g):
        beta = np.zeros((L, K))
        for t in range(L - 2, -1, -1):
            beta[t] = _logsumexp(trans + (em[t + 1] + beta[t + 1])[None, :], axis=1)
        unary = np.exp(alpha + beta - log_z)  # (L, K) marginals

        demis = unary.copy()
        demis[np.arange(L), gold] -= 1.0
        emissions.ensure_grad()
        emissions.grad += g * demis

        dstart = unary[0].copy()
        dstart[gold[0]] -= 1.0
        p.start_scores.ensure_grad()
        p.start_scores.grad += g * dstart

        dtrans = np.zeros((K, K))
        for t in range(1, L):
            pair = np.exp(
                alpha[t - 1][:, None] + trans + (em[t] + beta[t])[None, :] - log_z
            )
            dtrans += pair
            dtrans[gold[t - 1], gold[t]] -= 1.0
        p.transitions.ensure_grad()
        p.transitions.grad += g * dtrans

    return _attach(out, (emissions, p.transitions, p.start_scores), bwd)


def crf_path_score(emissions: np.ndarray, path, p: CrfParams) -> float:
    """Unnormalized score of one label path (start + emissions + transitions)."""
    path = np.asarray(path, dtype=np.intp)
    L = emissions.shape[0]
    score = p.start_scores.data[path[0]] + emissions[np.arange(L), path].sum()
    if L > 1:
        score += p.transitions.data[path[:-1], path[1:]].sum()
    return float(score)


def crf_viterbi(emissions, p: CrfParams) -> list[int]:
    """Best-scoring path; argmax ties resolve to the lower label id."""
    em = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions)
    p.check()
    L, K = em.shape
    trans = p.transitions.data
    score = p.start_scores.data + em[0]
    back = np.zeros((L, K), dtype=np.intp)
    for t in range(1, L):
        cand = score[:, None] + trans  # (prev, cur)
        back[t] = cand.argmax(axis=0)  # first max = lowest prev id
        score = cand.max(axis=0) + em[t]
    best = int(score.argmax())
    path = [best]
    for t in range(L - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path
