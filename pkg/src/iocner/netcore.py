"""Numeric building blocks with hand-written backward passes.

Everything operates on float64 numpy arrays. Recurrent layers process one
sentence at a time; the character encoder batches the tokens of a sentence
and handles their differing lengths with a step mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


sigmoid = expit


def softmax(x):
    z = np.exp(x - np.max(x))
    return z / z.sum()


def uniform_init(rng, shape, scale=1.0):
    return rng.uniform(-scale, scale, size=shape)


# ---------------------------------------------------------------- LSTM


@dataclass
class LstmParams:
    """One LSTM direction. Gate blocks are ordered input, forget, output, candidate."""

    Wx: np.ndarray  # (D, 4H)
    Wh: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_size(self):
        return self.Wh.shape[0]

    @property
    def input_size(self):
        return self.Wx.shape[0]

    @classmethod
    def init(cls, rng, input_size, hidden_size, scale=1.0, forget_bias=1.0):
        H = hidden_size
        b = uniform_init(rng, 4 * H, scale)
        b[H:2 * H] += forget_bias
        return cls(uniform_init(rng, (input_size, 4 * H), scale),
                   uniform_init(rng, (H, 4 * H), scale), b)

    @classmethod
    def zeros(cls, input_size, hidden_size):
        H = hidden_size
        return cls(np.zeros((input_size, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H))

    def arrays(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}


def lstm_forward(X, p: LstmParams, mask=None):
    """Run an LSTM over ``X`` of shape (T, B, D) from zero state.

    ``mask`` (T, B) freezes the state of a sequence once its steps run out,
    so ``out[-1]`` holds each sequence's final state.
    Returns outputs (T, B, H) and a cache for ``lstm_backward``.
    """
    T, B, _ = X.shape
    H = p.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    hs[0] = h
    cs[0] = c
    gates = np.empty((T, B, 4 * H))
    tanh_c = np.empty((T, B, H))
    xw = X @ p.Wx + p.b
    for t in range(T):
        a = xw[t] + h @ p.Wh
        gi = sigmoid(a[:, :3 * H])
        gg = np.tanh(a[:, 3 * H:])
        c_new = gi[:, H:2 * H] * c + gi[:, :H] * gg
        tc = np.tanh(c_new)
        h_new = gi[:, 2 * H:3 * H] * tc
        if mask is not None:
            m = mask[t][:, None]
            c_new = m * c_new + (1.0 - m) * c
            h_new = m * h_new + (1.0 - m) * h
        gates[t, :, :3 * H] = gi
        gates[t, :, 3 * H:] = gg
        tanh_c[t] = tc
        h, c = h_new, c_new
        hs[t + 1] = h
        cs[t + 1] = c
    return hs[1:], (X, mask, p, hs, cs, gates, tanh_c)


def lstm_backward(dH, cache):
    """Backward pass of ``lstm_forward``; returns dX and a dict of parameter grads."""
    X, mask, p, hs, cs, gates, tanh_c = cache
    T, B, _ = X.shape
    H = p.hidden_size
    dX = np.empty_like(X)
    da_all = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    WhT = p.Wh.T
    for t in range(T - 1, -1, -1):
        dh = dH[t] + dh_next
        dc = dc_next
        if mask is not None:
            m = mask[t][:, None]
            dh_carry, dc_carry = (1.0 - m) * dh, (1.0 - m) * dc
            dh, dc = m * dh, m * dc
        else:
            dh_carry = dc_carry = 0.0
        g = gates[t]
        i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = tanh_c[t]
        dcn = dc + dh * o * (1.0 - tc * tc)
        da = da_all[t]
        da[:, :H] = dcn * cand * i * (1.0 - i)
        da[:, H:2 * H] = dcn * cs[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[:, 3 * H:] = dcn * i * (1.0 - cand * cand)
        dc_next = dcn * f + dc_carry
        dh_next = da @ WhT + dh_carry
    dX[:] = da_all @ p.Wx.T
    flat_da = da_all.reshape(T * B, 4 * H)
    grads = {
        "Wx": X.reshape(T * B, -1).T @ flat_da,
        "Wh": hs[:-1].reshape(T * B, H).T @ flat_da,
        "b": flat_da.sum(axis=0),
    }
    return dX, grads


def bilstm_encode(E, fwd: LstmParams, bwd: LstmParams):
    """Bidirectional encoding of an (n, D) sequence into (n, 2H) states.

    Returns the states and a cache for ``bilstm_backward``.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[0] == 0:
        raise ValueError("bilstm_encode needs a non-empty (n, D) sequence")
    hf, cf = lstm_forward(E[:, None, :], fwd)
    hb, cb = lstm_forward(E[::-1, None, :], bwd)
    h = np.concatenate([hf[:, 0], hb[::-1, 0]], axis=1)
    return h, (cf, cb, fwd.hidden_size)


def bilstm_backward(dh, cache):
    cf, cb, H = cache
    dEf, gf = lstm_backward(dh[:, None, :H], cf)
    dEb, gb = lstm_backward(dh[::-1, None, H:], cb)
    return dEf[:, 0] + dEb[::-1, 0], gf, gb


# ----------------------------------------------------------- attention


@dataclass
class AttentionParams:
    W: np.ndarray  # (A, 2H)
    b: np.ndarray  # (A,)
    u: np.ndarray  # (A,)

    @classmethod
    def init(cls, rng, input_size, attention_size, scale=1.0):
        return cls(uniform_init(rng, (attention_size, input_size), scale),
                   uniform_init(rng, attention_size, scale),
                   uniform_init(rng, attention_size, scale))

    def arrays(self):
        return {"W": self.W, "b": self.b, "u": self.u}


def attention(h, params: AttentionParams):
    """Softmax-weighted summary of the hidden states ``h`` (n, 2H).

    Returns the weights (n,), the sentence vector (2H,) and a cache.
    """
    u = np.tanh(h @ params.W.T + params.b)
    alpha = softmax(u @ params.u)
    s = alpha @ h
    return alpha, s, (h, u, alpha, params)


def attention_backward(ds, cache):
    """Gradients given dL/ds. Returns dh and a dict of parameter grads."""
    h, u, alpha, params = cache
    dh = np.outer(alpha, ds)
    dalpha = h @ ds
    dscore = alpha * (dalpha - alpha @ dalpha)
    du = np.outer(dscore, params.u)
    dpre = du * (1.0 - u * u)
    dh += dpre @ params.W
    grads = {"W": dpre.T @ h, "b": dpre.sum(axis=0), "u": u.T @ dscore}
    return dh, grads


def output_vector(h, s, f=None):
    """Per-position concatenation [h_i; s; f_i] with ``s`` repeated over positions."""
    h = np.atleast_2d(h)
    parts = [h, np.broadcast_to(s, (h.shape[0], s.shape[-1]))]
    if f is not None:
        parts.append(np.atleast_2d(f))
    return np.concatenate(parts, axis=1)


# ---------------------------------------------------------- feed-forward


@dataclass
class FfnParams:
    W1: np.ndarray  # (F, In)
    b1: np.ndarray
    W2: np.ndarray  # (L, F)
    b2: np.ndarray

    @classmethod
    def init(cls, rng, input_size, hidden_size, n_labels, scale=1.0):
        return cls(uniform_init(rng, (hidden_size, input_size), scale),
                   uniform_init(rng, hidden_size, scale),
                   uniform_init(rng, (n_labels, hidden_size), scale),
                   uniform_init(rng, n_labels, scale))

    def arrays(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


def ffn_logits(o, params: FfnParams):
    """Unnormalised label scores ``W2 tanh(W1 o + b1) + b2`` for each row of ``o``."""
    z = np.tanh(o @ params.W1.T + params.b1)
    return z @ params.W2.T + params.b2, (o, z, params)


def ffn_backward(dlogits, cache):
    o, z, params = cache
    dz = dlogits @ params.W2
    dpre = dz * (1.0 - z * z)
    grads = {"W1": dpre.T @ o, "b1": dpre.sum(axis=0),
             "W2": dlogits.T @ z, "b2": dlogits.sum(axis=0)}
    return dpre @ params.W1, grads


# ------------------------------------------------------------- dropout


def dropout(v, p, rng, training=True):
    """Inverted dropout. Returns the output and the scaling mask applied."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return v, None
    keep = (rng.random(np.shape(v)) >= p) / (1.0 - p)
    return v * keep, keep


# -------------------------------------------------------- param store


class ParamStore:
    """Named trainable tensors with paired gradient buffers.

    Tensors registered as ``sparse`` (embedding tables) track the rows touched
    since the last ``zero_grad`` so clipping and updates skip untouched rows.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen: dict[str, np.ndarray] = {}
        self._sparse: dict[str, set] = {}

    def add(self, name, value, sparse=False, frozen_mask=None):
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        value = np.asarray(value, dtype=float)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        if sparse:
            self._sparse[name] = set()
        if frozen_mask is not None:
            self.frozen[name] = np.asarray(frozen_mask, dtype=bool)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for name, g in self.grads.items():
            rows = self._sparse.get(name)
            if rows is None:
                g.fill(0.0)
            elif rows:
                g[list(rows)] = 0.0
                rows.clear()

    def accumulate(self, name, grad):
        self.grads[name] += grad

    def accumulate_rows(self, name, rows, values):
        rows = np.asarray(rows, dtype=int)
        np.add.at(self.grads[name], rows, values)
        if name in self._sparse:
            self._sparse[name].update(rows.tolist())

    def _active(self, name):
        rows = self._sparse.get(name)
        g = self.grads[name]
        if rows is None:
            return g
        return g[sorted(rows)] if rows else g[:0]

    def apply_frozen(self):
        for name, mask in self.frozen.items():
            self.grads[name][mask] = 0.0

    def grad_norm(self):
        total = 0.0
        for name in self.grads:
            g = self._active(name)
            total += float(np.sum(g * g))
        return float(np.sqrt(total))

    def scale_grads(self, factor):
        for name, g in self.grads.items():
            rows = self._sparse.get(name)
            if rows is None:
                g *= factor
            elif rows:
                idx = sorted(rows)
                g[idx] *= factor

    def sgd_step(self, lr):
        for name, p in self.params.items():
            rows = self._sparse.get(name)
            if rows is None:
                p -= lr * self.grads[name]
            elif rows:
                idx = sorted(rows)
                p[idx] -= lr * self.grads[name][idx]

    def state_dict(self):
        return {k: v.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        for k, v in state.items():
            self.params[k][...] = v


# ------------------------------------------------------ gradient check


def grad_check_report(closure, params, eps=1e-5, floor=1e-6, names=None):
    """Central finite differences against analytic gradients, per tensor.

    ``closure()`` must return ``(loss, grads)`` where ``grads`` maps names to
    arrays shaped like ``params[name]``; ``params`` maps names to the arrays
    the closure reads, which are perturbed in place and restored.
    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    loss, analytic = closure()
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    analytic = {k: np.array(v, dtype=float, copy=True) for k, v in analytic.items()}
    report = {}
    for name in names or list(params):
        p = params[name]
        a = analytic[name]
        worst = 0.0
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            lp = closure()[0]
            p[idx] = old - eps
            lm = closure()[0]
            p[idx] = old
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise FloatingPointError(f"non-finite loss perturbing {name}{idx}")
            num = (lp - lm) / (2 * eps)
            err = abs(a[idx] - num) / max(abs(a[idx]), abs(num), floor)
            worst = max(worst, err)
        report[name] = worst
    return report


def grad_check(closure, params, eps=1e-5, floor=1e-6):
    """Maximum relative finite-difference error over all tensors in ``params``."""
    report = grad_check_report(closure, params, eps=eps, floor=floor)
    return max(report.values()) if report else 0.0
