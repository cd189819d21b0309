"""Linear-chain CRF over label scores with BEGIN/END boundary states.

The transition matrix ``T`` has shape (L+2, L+2): rows/columns ``0..L-1`` are
labels, ``L`` is BEGIN and ``L+1`` is END. With the boundary rows and columns
set to zero the sequence score reduces to the plain sum of emission and
label-to-label transition scores.
"""

from __future__ import annotations

import numpy as np

MASK_VALUE = -1e4


def logsumexp(x, axis=None):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else out.item()


def _split(T, L):
    T = np.asarray(T, dtype=float)
    if T.shape != (L + 2, L + 2):
        raise ValueError(f"transition matrix must be {(L + 2, L + 2)}, got {T.shape}")
    return T[:L, :L], T[L, :L], T[:L, L + 1]


def _check(p, y=None):
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("emission scores must be a non-empty (n, L) array")
    if y is not None and len(y) != p.shape[0]:
        raise ValueError(f"{len(y)} labels for {p.shape[0]} positions")
    return p


def init_transitions(rng, n_labels, allowed=None, scale=1.0):
    """Uniform transition scores with disallowed entries pinned to ``MASK_VALUE``."""
    T = rng.uniform(-scale, scale, size=(n_labels + 2, n_labels + 2))
    if allowed is not None:
        T[~allowed] = MASK_VALUE
    return T


def sequence_score(p, y, T):
    """Score of label sequence ``y`` given emissions ``p`` (n, L)."""
    p = _check(p, y)
    L = p.shape[1]
    trans, start, end = _split(T, L)
    y = np.asarray(y, dtype=int)
    score = p[np.arange(len(y)), y].sum()
    score += trans[y[:-1], y[1:]].sum()
    return float(score + start[y[0]] + end[y[-1]])


def _forward(p, trans, start):
    n, L = p.shape
    alpha = np.empty((n, L))
    alpha[0] = start + p[0]
    for i in range(1, n):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + trans, axis=0) + p[i]
    return alpha


def _backward(p, trans, end):
    n, L = p.shape
    beta = np.empty((n, L))
    beta[-1] = end
    for i in range(n - 2, -1, -1):
        beta[i] = logsumexp(trans + (p[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def log_partition(p, T):
    """log of the sum of exp(score) over all label sequences (forward algorithm)."""
    p = _check(p)
    trans, start, end = _split(T, p.shape[1])
    alpha = _forward(p, trans, start)
    return float(logsumexp(alpha[-1] + end))


def marginals(p, T):
    """Unary (n, L) and pairwise (n-1, L, L) posterior marginals, plus logZ."""
    p = _check(p)
    n, L = p.shape
    trans, start, end = _split(T, L)
    alpha = _forward(p, trans, start)
    beta = _backward(p, trans, end)
    logZ = float(logsumexp(alpha[-1] + end))
    unary = np.exp(alpha + beta - logZ)
    pair = np.exp(alpha[:-1, :, None] + trans[None] + (p[1:] + beta[1:])[:, None, :] - logZ)
    return unary, pair, logZ


def nll_loss_and_grads(p, y, T, allowed=None):
    """Negative log-likelihood of gold ``y`` with gradients w.r.t. ``p`` and ``T``.

    Gradients of entries outside ``allowed`` are zeroed. If ``allowed`` is given
    the gold sequence must respect it.
    """
    p = _check(p, y)
    n, L = p.shape
    y = np.asarray(y, dtype=int)
    if np.any(y < 0) or np.any(y >= L):
        raise ValueError("gold label index out of range")
    if allowed is not None:
        path = np.concatenate([[L], y, [L + 1]])
        if not np.all(allowed[path[:-1], path[1:]]):
            bad = int(np.argmin(allowed[path[:-1], path[1:]]))
            raise ValueError(f"gold sequence uses a disallowed transition at position {bad}")
    unary, pair, logZ = marginals(p, T)
    loss = logZ - sequence_score(p, y, T)

    dp = unary.copy()
    dp[np.arange(n), y] -= 1.0
    dT = np.zeros((L + 2, L + 2))
    dT[:L, :L] = pair.sum(axis=0)
    np.subtract.at(dT, (y[:-1], y[1:]), 1.0)
    dT[L, :L] = unary[0]
    dT[L, y[0]] -= 1.0
    dT[:L, L + 1] = unary[-1]
    dT[y[-1], L + 1] -= 1.0
    if allowed is not None:
        dT[~allowed] = 0.0
    return float(loss), dp, dT


def viterbi_decode(p, T, allowed=None):
    """Highest-scoring label sequence and its score.

    Entries outside ``allowed`` are excluded outright. Ties go to the lower
    label index.
    """
    p = _check(p)
    n, L = p.shape
    T = np.asarray(T, dtype=float)
    if allowed is not None:
        T = np.where(allowed, T, -np.inf)
    trans, start, end = _split(T, L)
    delta = start + p[0]
    back = np.empty((n, L), dtype=int)
    for i in range(1, n):
        cand = delta[:, None] + trans
        back[i] = np.argmax(cand, axis=0)
        delta = cand[back[i], np.arange(L)] + p[i]
    final = delta + end
    best = int(np.argmax(final))
    path = [best]
    for i in range(n - 1, 0, -1):
        best = int(back[i, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])
