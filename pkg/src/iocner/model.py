"""The tagging network: embeddings, token BiLSTM, attention, features, FFN, CRF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import crf
from .corpus import DEFAULT_SCHEME, LabelScheme
from .embeddings import CharVocab, TokenVocab, encode_chars_backward, encode_chars_batch
from .features import N_FEATURES, FeatureConfig, default_config, sentence_features
from .netcore import (
    AttentionParams,
    FfnParams,
    LstmParams,
    ParamStore,
    attention,
    attention_backward,
    bilstm_backward,
    bilstm_encode,
    dropout,
    ffn_backward,
    ffn_logits,
    output_vector,
    uniform_init,
)


@dataclass(frozen=True)
class Dimensions:
    token_dim: int = 100
    char_dim: int = 25
    char_hidden: int = 25
    hidden: int = 100
    attention: int = 100
    ffn_hidden: int = 100

    @property
    def embedding_size(self):
        return self.token_dim + 2 * self.char_hidden

    def output_size(self, use_features=True):
        return 4 * self.hidden + (N_FEATURES if use_features else 0)


@dataclass
class EncodedSentence:
    token_ids: np.ndarray
    char_ids: list
    features: np.ndarray

    def __len__(self):
        return len(self.token_ids)


class TaggerNetwork:
    """All trainable parameters plus the vocabularies needed to run them."""

    def __init__(self, dims: Dimensions, token_vocab: TokenVocab, char_vocab: CharVocab,
                 scheme: LabelScheme = DEFAULT_SCHEME, feature_config: FeatureConfig | None = None,
                 use_features=True, token_table=None, seed=0, init_scale=1.0, forget_bias=1.0,
                 dense_scale=None):
        self.dims = dims
        self.token_vocab = token_vocab
        self.char_vocab = char_vocab
        self.scheme = scheme
        self.feature_config = feature_config or default_config()
        self.use_features = use_features
        self.allowed = scheme.transition_mask()
        rng = np.random.default_rng(seed)
        self.store = store = ParamStore()
        L = len(scheme)

        def dense(fan_in, fan_out):
            if dense_scale is not None:
                return dense_scale
            return float(np.sqrt(6.0 / (fan_in + fan_out)))

        emb = uniform_init(rng, (len(token_vocab), dims.token_dim), init_scale)
        if token_table is not None:
            token_table = np.asarray(token_table, dtype=float)
            if token_table.shape[1] != dims.token_dim:
                raise ValueError(
                    f"pretrained dim {token_table.shape[1]} != token_dim {dims.token_dim}")
            emb[:len(token_table)] = token_table
        store.add("tok_emb", emb, sparse=True)
        store.add("char_emb", uniform_init(rng, (len(char_vocab), dims.char_dim), init_scale),
                  sparse=True)
        for prefix, d_in, h in (("char_fwd", dims.char_dim, dims.char_hidden),
                                ("char_bwd", dims.char_dim, dims.char_hidden),
                                ("tok_fwd", dims.embedding_size, dims.hidden),
                                ("tok_bwd", dims.embedding_size, dims.hidden)):
            lstm = LstmParams.init(rng, d_in, h, init_scale, forget_bias)
            for k, v in lstm.arrays().items():
                store.add(f"{prefix}.{k}", v)
        att = AttentionParams.init(rng, 2 * dims.hidden, dims.attention,
                                  dense(2 * dims.hidden, dims.attention))
        for k, v in att.arrays().items():
            store.add(f"att.{k}", v)
        if use_features:
            store.add("feat.W", np.eye(N_FEATURES))
            store.add("feat.b", np.zeros(N_FEATURES))
        n_out = dims.output_size(use_features)
        ffn = FfnParams.init(rng, n_out, dims.ffn_hidden, L, dense(n_out, dims.ffn_hidden))
        for k, v in ffn.arrays().items():
            store.add(f"ffn.{k}", v)
        store.add("crf.T", crf.init_transitions(rng, L, self.allowed, dense(L, L)),
                  frozen_mask=~self.allowed)

    # -- parameter views

    def _lstm(self, prefix):
        s = self.store
        return LstmParams(s[f"{prefix}.Wx"], s[f"{prefix}.Wh"], s[f"{prefix}.b"])

    def _attention(self):
        s = self.store
        return AttentionParams(s["att.W"], s["att.b"], s["att.u"])

    def _ffn(self):
        s = self.store
        return FfnParams(s["ffn.W1"], s["ffn.b1"], s["ffn.W2"], s["ffn.b2"])

    @property
    def transitions(self):
        return self.store["crf.T"]

    # -- input preparation

    def encode(self, tokens) -> EncodedSentence:
        tokens = list(tokens)
        if not tokens:
            raise ValueError("cannot encode an empty sentence")
        return EncodedSentence(
            np.array([self.token_vocab.index(t) for t in tokens], dtype=int),
            [self.char_vocab.encode(t) for t in tokens],
            sentence_features(tokens, self.feature_config),
        )

    # -- forward / backward

    def forward(self, enc: EncodedSentence, training=False, rng=None, dropout_p=0.5):
        s = self.store
        char_fwd, char_bwd = self._lstm("char_fwd"), self._lstm("char_bwd")
        b, char_cache = encode_chars_batch(enc.char_ids, s["char_emb"], char_fwd, char_bwd)
        e = np.concatenate([s["tok_emb"][enc.token_ids], b], axis=1)
        e, keep = dropout(e, dropout_p, rng, training)
        h, lstm_cache = bilstm_encode(e, self._lstm("tok_fwd"), self._lstm("tok_bwd"))
        alpha, sent_vec, att_cache = attention(h, self._attention())
        f = enc.features @ s["feat.W"].T + s["feat.b"] if self.use_features else None
        o = output_vector(h, sent_vec, f)
        logits, ffn_cache = ffn_logits(o, self._ffn())
        cache = (enc, char_cache, keep, lstm_cache, att_cache, ffn_cache)
        return logits, alpha, cache

    def backward(self, dlogits, cache):
        """Accumulate parameter gradients into the store."""
        enc, char_cache, keep, lstm_cache, att_cache, ffn_cache = cache
        s = self.store
        dims = self.dims
        H = dims.hidden
        do, g = ffn_backward(dlogits, ffn_cache)
        for k, v in g.items():
            s.accumulate(f"ffn.{k}", v)
        dh = do[:, :2 * H].copy()
        ds = do[:, 2 * H:4 * H].sum(axis=0)
        if self.use_features:
            df = do[:, 4 * H:]
            s.accumulate("feat.W", df.T @ enc.features)
            s.accumulate("feat.b", df.sum(axis=0))
        dh_att, g = attention_backward(ds, att_cache)
        for k, v in g.items():
            s.accumulate(f"att.{k}", v)
        dh += dh_att
        de, gf, gb = bilstm_backward(dh, lstm_cache)
        for k in gf:
            s.accumulate(f"tok_fwd.{k}", gf[k])
            s.accumulate(f"tok_bwd.{k}", gb[k])
        if keep is not None:
            de = de * keep
        s.accumulate_rows("tok_emb", enc.token_ids, de[:, :dims.token_dim])
        rows, vals, gf, gb = encode_chars_backward(de[:, dims.token_dim:], char_cache)
        s.accumulate_rows("char_emb", rows, vals)
        for k in gf:
            s.accumulate(f"char_fwd.{k}", gf[k])
            s.accumulate(f"char_bwd.{k}", gb[k])

    def loss_and_grads(self, enc: EncodedSentence, gold, training=False, rng=None, dropout_p=0.5):
        """CRF negative log-likelihood of ``gold``; gradients go into the store."""
        logits, _, cache = self.forward(enc, training, rng, dropout_p)
        loss, dlogits, dT = crf.nll_loss_and_grads(logits, gold, self.transitions, self.allowed)
        self.store.accumulate("crf.T", dT)
        self.backward(dlogits, cache)
        return loss

    def loss(self, enc: EncodedSentence, gold, training=False, rng=None, dropout_p=0.5):
        logits, _, _ = self.forward(enc, training, rng, dropout_p)
        T = self.transitions
        return crf.log_partition(logits, T) - crf.sequence_score(logits, gold, T)

    def decode(self, enc: EncodedSentence) -> list[int]:
        logits, _, _ = self.forward(enc)
        path, _ = crf.viterbi_decode(logits, self.transitions, self.allowed)
        return path

    def attention_weights(self, enc: EncodedSentence):
        return self.forward(enc)[1]

    def tag(self, tokens) -> list[int]:
        tokens = list(tokens)
        if not tokens:
            return []
        return self.decode(self.encode(tokens))
