"""Token and character embeddings, skip-gram pretraining, character BiLSTM encoder."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .netcore import LstmParams, lstm_backward, lstm_forward, sigmoid

logger = logging.getLogger(__name__)

UNK = 0


def _surface(tok):
    return getattr(tok, "surface", tok)


class Vocab:
    """String-to-index map with index 0 reserved for unknown items."""

    def __init__(self, items: Iterable[str] = ()):
        self.itos: list = [None]
        self.stoi: dict[str, int] = {}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        idx = self.stoi.get(item)
        if idx is None:
            idx = len(self.itos)
            self.stoi[item] = idx
            self.itos.append(item)
        return idx

    def index(self, item) -> int:
        return self.stoi.get(item, UNK)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, item):
        return item in self.stoi

    def items(self) -> list[str]:
        """Known items in index order (UNK excluded)."""
        return self.itos[1:]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos


class TokenVocab(Vocab):
    @classmethod
    def build(cls, texts, min_count=1):
        counts = Counter(_surface(t) for sent in texts for t in sent)
        # first-occurrence order keeps indices stable and deterministic
        return cls(w for w in counts if counts[w] >= min_count)

    def index(self, token) -> int:
        return self.stoi.get(_surface(token), UNK)


class CharVocab(Vocab):
    @classmethod
    def build(cls, texts):
        vocab = cls()
        for sent in texts:
            for tok in sent:
                for ch in _surface(tok):
                    vocab.add(ch)
        return vocab

    def encode(self, token) -> list[int]:
        return [self.stoi.get(ch, UNK) for ch in _surface(token)]


# ------------------------------------------------------------ skip-gram


def _sgns_sentence(ids, W_in, W_out, window, negatives, noise_cdf, rng, lr):
    n = len(ids)
    if n < 2:
        return
    for i in range(n):
        ctx = np.concatenate([ids[max(0, i - window):i], ids[i + 1:i + 1 + window]])
        m = len(ctx)
        neg = np.searchsorted(noise_cdf, rng.random((m, negatives)), side="right")
        targets = np.concatenate([ctx[:, None], neg], axis=1)
        labels = np.zeros(targets.shape)
        labels[:, 0] = 1.0
        v = W_in[ids[i]]
        U = W_out[targets]
        g = (labels - sigmoid(U @ v)) * lr
        dv = np.einsum("mk,mkd->d", g, U)
        np.add.at(W_out, targets, g[..., None] * v)
        W_in[ids[i]] += dv


def pretrain_skipgram(texts: Sequence[Sequence], dim=100, window=8, min_count=1, iterations=15,
                      negatives=8, seed=0, alpha=0.025, min_alpha=None, workers=1):
    """Skip-gram with negative sampling over tokenised sentences.

    Returns ``(vocab, table)`` where ``table`` has one row per vocab index;
    row 0 is the unknown-token row drawn uniformly from [-1, 1].
    Learning rate decays linearly from ``alpha``. ``workers > 1`` splits each
    pass over threads that update the shared tables without locking, which
    is faster but gives up bitwise reproducibility.
    """
    texts = [list(s) for s in texts]
    vocab = TokenVocab.build(texts, min_count=min_count)
    if len(vocab) <= 1:
        raise ValueError("cannot pretrain embeddings on an empty corpus")
    rng = np.random.default_rng(seed)
    V = len(vocab)
    table = np.empty((V, dim))
    table[UNK] = rng.uniform(-1.0, 1.0, dim)
    table[1:] = (rng.random((V - 1, dim)) - 0.5) / dim
    W_out = np.zeros((V, dim))

    counts = np.zeros(V)
    encoded = []
    for sent in texts:
        ids = np.array([vocab.index(t) for t in sent], dtype=int)
        ids = ids[ids != UNK]
        np.add.at(counts, ids, 1.0)
        encoded.append(ids)
    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    min_alpha = alpha * 1e-4 if min_alpha is None else min_alpha
    total = max(1, iterations * sum(len(ids) for ids in encoded))
    done = 0

    def lr_at(processed):
        return max(min_alpha, alpha - (alpha - min_alpha) * processed / total)

    for it in range(iterations):
        if workers <= 1:
            for ids in encoded:
                _sgns_sentence(ids, table, W_out, window, negatives, noise_cdf, rng, lr_at(done))
                done += len(ids)
        else:
            chunks = [encoded[k::workers] for k in range(workers)]
            base = done

            def run(k):
                local = np.random.default_rng([seed, it, k])
                processed = base
                for ids in chunks[k]:
                    _sgns_sentence(ids, table, W_out, window, negatives, noise_cdf, local,
                                   lr_at(processed))
                    processed += len(ids) * workers

            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(run, range(workers)))
            done += sum(len(ids) for ids in encoded)
        logger.debug("skip-gram iteration %d/%d", it + 1, iterations)
    return vocab, table


def save_embeddings(path, vocab: TokenVocab, table) -> None:
    """Write ``<vocab_size> <dim>`` then ``token v1 ... vd`` per known token."""
    dim = table.shape[1]
    lines = [f"{len(vocab) - 1} {dim}"]
    for idx, tok in enumerate(vocab.items(), start=1):
        lines.append(tok + " " + " ".join(repr(float(x)) for x in table[idx]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path, seed=0):
    """Read an embedding file; the unknown-token row is drawn uniformly from [-1, 1]."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad embedding header")
        size, dim = int(header[0]), int(header[1])
        vocab = TokenVocab()
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values")
            vocab.add(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(rows) != size:
        raise ValueError(f"{path}: header announces {size} rows, found {len(rows)}")
    table = np.empty((size + 1, dim))
    table[UNK] = np.random.default_rng(seed).uniform(-1.0, 1.0, dim)
    if rows:
        table[1:] = np.asarray(rows)
    return vocab, table


# --------------------------------------------------- lookups and encoders


def embed_token(token, vocab: TokenVocab, table) -> np.ndarray:
    """Row of ``table`` for the token, the unknown row if it is not in the vocab."""
    return table[vocab.index(token)]


def char_batch(char_ids: Sequence[Sequence[int]], char_table):
    """Left-aligned forward and reversed inputs (T, n, D) with the step mask."""
    n = len(char_ids)
    lengths = np.array([len(c) for c in char_ids])
    if n == 0 or lengths.min() < 1:
        raise ValueError("every token needs at least one character")
    T = int(lengths.max())
    D = char_table.shape[1]
    idx_f = np.full((T, n), -1, dtype=int)
    idx_b = np.full((T, n), -1, dtype=int)
    for j, ids in enumerate(char_ids):
        idx_f[:len(ids), j] = ids
        idx_b[:len(ids), j] = ids[::-1]
    mask = (idx_f >= 0).astype(float)
    Xf = np.where(mask[..., None] > 0, char_table[np.maximum(idx_f, 0)], 0.0)
    Xb = np.where(mask[..., None] > 0, char_table[np.maximum(idx_b, 0)], 0.0)
    return Xf, Xb, mask, idx_f, idx_b


def encode_chars_batch(char_ids, char_table, fwd: LstmParams, bwd: LstmParams):
    """Final forward/backward character-LSTM states for each token, (n, 2Hc)."""
    Xf, Xb, mask, idx_f, idx_b = char_batch(char_ids, char_table)
    hf, cf = lstm_forward(Xf, fwd, mask)
    hb, cb = lstm_forward(Xb, bwd, mask)
    out = np.concatenate([hf[-1], hb[-1]], axis=1)
    return out, (cf, cb, mask, idx_f, idx_b, fwd.hidden_size)


def encode_chars_backward(dout, cache):
    """Returns (char rows, row grads, fwd grads, bwd grads)."""
    cf, cb, mask, idx_f, idx_b, H = cache
    T = mask.shape[0]
    dHf = np.zeros((T,) + dout[:, :H].shape)
    dHf[-1] = dout[:, :H]
    dHb = np.zeros_like(dHf)
    dHb[-1] = dout[:, H:]
    dXf, gf = lstm_backward(dHf, cf)
    dXb, gb = lstm_backward(dHb, cb)
    valid = mask > 0
    rows = np.concatenate([idx_f[valid], idx_b[valid]])
    vals = np.concatenate([dXf[valid], dXb[valid]])
    return rows, vals, gf, gb


def encode_chars(token, char_vocab: CharVocab, char_table, fwd: LstmParams, bwd: LstmParams):
    """Forward and backward character-level encodings of a single token."""
    out, _ = encode_chars_batch([char_vocab.encode(token)], char_table, fwd, bwd)
    H = fwd.hidden_size
    return out[0, :H], out[0, H:]


def input_embedding(token, vocab, table, char_vocab, char_table, fwd, bwd) -> np.ndarray:
    """[token embedding; forward char encoding; backward char encoding]."""
    bf, bb = encode_chars(token, char_vocab, char_table, fwd, bwd)
    return np.concatenate([embed_token(token, vocab, table), bf, bb])
