"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np


def brute_force_scores(p, T):
    """Score of every label sequence by direct summation: {sequence: score}."""
    n, L = p.shape
    out = {}
    for seq in itertools.product(range(L), repeat=n):
        s = T[L, seq[0]] + T[seq[-1], L + 1]
        for i in range(n):
            s += p[i][seq[i]]
        for i in range(1, n):
            s += T[seq[i - 1], seq[i]]
        out[seq] = s
    return out


def enumerate_scores(p, T):
    """Vectorised exhaustive enumeration: (all sequences (L^n, n), their scores)."""
    n, L = p.shape
    seqs = np.array(list(itertools.product(range(L), repeat=n)), dtype=int)
    scores = p[np.arange(n), seqs].sum(axis=1) + T[L, seqs[:, 0]] + T[seqs[:, -1], L + 1]
    if n > 1:
        scores += T[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_log_partition(p, T):
    scores = list(brute_force_scores(p, T).values())
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_force_best(p, T, allowed=None):
    best = None
    for seq, s in brute_force_scores(p, T).items():
        if allowed is not None:
            path = (p.shape[1],) + seq + (p.shape[1] + 1,)
            if not all(allowed[a, b] for a, b in zip(path, path[1:])):
                continue
        if best is None or s > best[1]:
            best = (seq, s)
    return best


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_reference(xs, Wx, Wh, b):
    """Step-by-step scalar LSTM (gate order i, f, o, g) from zero state."""
    H = Wh.shape[0]
    h = [0.0] * H
    c = [0.0] * H
    out = []
    for x in xs:
        a = [sum(x[d] * Wx[d][k] for d in range(len(x))) + sum(h[j] * Wh[j][k] for j in range(H)) + b[k]
             for k in range(4 * H)]
        i = [_sig(a[k]) for k in range(H)]
        f = [_sig(a[H + k]) for k in range(H)]
        o = [_sig(a[2 * H + k]) for k in range(H)]
        g = [math.tanh(a[3 * H + k]) for k in range(H)]
        c = [f[k] * c[k] + i[k] * g[k] for k in range(H)]
        h = [o[k] * math.tanh(c[k]) for k in range(H)]
        out.append(list(h))
    return np.array(out)


def attention_reference(h, W, b, u):
    n = len(h)
    scores = []
    for i in range(n):
        ui = [math.tanh(sum(W[a][d] * h[i][d] for d in range(len(h[i]))) + b[a]) for a in range(len(b))]
        scores.append(sum(ui[a] * u[a] for a in range(len(u))))
    m = max(scores)
    ex = [math.exp(s - m) for s in scores]
    alpha = [e / sum(ex) for e in ex]
    s = [sum(alpha[i] * h[i][d] for i in range(n)) for d in range(len(h[0]))]
    return alpha, s


def finite_difference(f, x, eps=1e-6):
    """Central differences of scalar ``f()`` w.r.t. every entry of array ``x`` (in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        lp = f()
        flat[i] = old - eps
        lm = f()
        flat[i] = old
        gflat[i] = (lp - lm) / (2 * eps)
    return grad
