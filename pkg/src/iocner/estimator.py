"""Scikit-learn style estimators around the neural tagger and the baseline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baseline import baseline_tag, build_lexicon
from .corpus import DEFAULT_SCHEME, spans_from_bio
from .embeddings import load_embeddings
from .evaluation import entity_prf
from .features import FeatureConfig
from .trainer import TrainConfig, load_model, save_model, train
from .validation import as_sentences, check_token_sequences


class _TaggerMixin:
    def _tag_indices(self, tokens):
        raise NotImplementedError

    def predict(self, X):
        """BIO label strings for each sentence in ``X``."""
        check_is_fitted(self)
        scheme = self.scheme_
        return [[scheme.label(i) for i in self._tag_indices(toks)]
                for toks in check_token_sequences(X)]

    def predict_spans(self, X):
        check_is_fitted(self)
        return [spans_from_bio(self._tag_indices(toks), self.scheme_)
                for toks in check_token_sequences(X)]

    def score(self, X, y):
        """Span-level micro F1."""
        sents = as_sentences(X, y, self.scheme_)
        preds = [self._tag_indices(s.tokens) for s in sents]
        return entity_prf(sents, preds, self.scheme_).micro.f1


class IOCTagger(_TaggerMixin, BaseEstimator):
    """Character+token BiLSTM tagger with attention, spelling features and a CRF.

    Defaults: SGD at a fixed learning rate of 0.005, global gradient norm
    clipped to 5, dropout 0.5 on the input embeddings, at most 100 epochs
    with early stopping after 10 epochs without validation improvement,
    and 100/25/25/100 embedding and hidden sizes.

    Parameters
    ----------
    embeddings : str or (Vocab, ndarray), optional
        Pretrained token embeddings (a file path or ``pretrain_skipgram``
        output). Without them the token table starts random.
    use_features : bool
        Append the projected spelling features to every output vector.
    random_state : int
        Seeds initialisation, dropout and shuffling.

    Attributes
    ----------
    network_ : TaggerNetwork
    history_ : TrainHistory
    """

    def __init__(self, learning_rate=0.005, clip_norm=5.0, dropout_p=0.5, max_epochs=100,
                 patience=10, token_dim=100, char_dim=25, char_hidden=25, hidden=100,
                 attention=100, ffn_hidden=100, init_scale=1.0, forget_bias=1.0,
                 use_features=True, embeddings=None, tld_path=None, malware_path=None,
                 random_state=0):
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.dropout_p = dropout_p
        self.max_epochs = max_epochs
        self.patience = patience
        self.token_dim = token_dim
        self.char_dim = char_dim
        self.char_hidden = char_hidden
        self.hidden = hidden
        self.attention = attention
        self.ffn_hidden = ffn_hidden
        self.init_scale = init_scale
        self.forget_bias = forget_bias
        self.use_features = use_features
        self.embeddings = embeddings
        self.tld_path = tld_path
        self.malware_path = malware_path
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate, clip_norm=self.clip_norm, dropout_p=self.dropout_p,
            max_epochs=self.max_epochs, patience=self.patience, seed=self.random_state,
            token_dim=self.token_dim, char_dim=self.char_dim, char_hidden=self.char_hidden,
            hidden=self.hidden, attention=self.attention, ffn_hidden=self.ffn_hidden,
            init_scale=self.init_scale, forget_bias=self.forget_bias,
            use_features=self.use_features)

    def fit(self, X, y=None, X_val=None, y_val=None, callback=None):
        """Train on ``X``/``y``; early stopping watches ``X_val``/``y_val`` (``X`` if absent)."""
        scheme = DEFAULT_SCHEME
        train_set = as_sentences(X, y, scheme)
        val_set = as_sentences(X_val, y_val, scheme) if X_val is not None else None
        pretrained = self.embeddings
        if isinstance(pretrained, str):
            pretrained = load_embeddings(pretrained, seed=self.random_state)
        config = self._train_config()
        feature_config = FeatureConfig.load(self.tld_path, self.malware_path)
        self.network_, self.history_ = train(train_set, val_set, config, pretrained, scheme,
                                             feature_config, callback=callback)
        self.config_ = config
        self.scheme_ = scheme
        return self

    def _tag_indices(self, tokens):
        return self.network_.tag(tokens)

    def attention_weights(self, tokens):
        check_is_fitted(self)
        (tokens,) = check_token_sequences([tokens])
        return self.network_.attention_weights(self.network_.encode(tokens))

    def save(self, path):
        check_is_fitted(self)
        save_model(self.network_, path, self.config_)

    @classmethod
    def load(cls, path):
        net, config = load_model(path)
        params = {}
        if config is not None:
            params = {k: getattr(config, k) for k in (
                "learning_rate", "clip_norm", "dropout_p", "max_epochs", "patience", "token_dim",
                "char_dim", "char_hidden", "hidden", "attention", "ffn_hidden", "init_scale",
                "forget_bias", "use_features")}
            params["random_state"] = config.seed
        est = cls(**params)
        est.network_ = net
        est.config_ = config
        est.scheme_ = net.scheme
        est.history_ = None
        return est


class BaselineTagger(_TaggerMixin, BaseEstimator):
    """Feature-rule tagger; attacker/method/target come from a training lexicon."""

    def __init__(self, tld_path=None, malware_path=None):
        self.tld_path = tld_path
        self.malware_path = malware_path

    def fit(self, X, y=None):
        self.scheme_ = DEFAULT_SCHEME
        self.feature_config_ = FeatureConfig.load(self.tld_path, self.malware_path)
        self.lexicon_ = build_lexicon(as_sentences(X, y, self.scheme_), self.scheme_)
        return self

    def _tag_indices(self, tokens):
        return baseline_tag(tokens, self.lexicon_, self.feature_config_, self.scheme_)
