"""Input checks shared by the estimators."""

from __future__ import annotations

from collections.abc import Sequence

from .corpus import DEFAULT_SCHEME, LabelScheme, Sentence, Token, check_bio, tokenize


def check_token_sequences(X) -> list[list[Token]]:
    """Normalise ``X`` to a list of token lists.

    Items may be raw strings (tokenised on whitespace), sequences of strings
    or ``Token`` objects, or ``Sentence`` objects.
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of sentences, got a single string")
    out = []
    for k, item in enumerate(X):
        if isinstance(item, Sentence):
            out.append(list(item.tokens))
        elif isinstance(item, str):
            out.append(tokenize(item))
        elif isinstance(item, Sequence):
            try:
                out.append([t if isinstance(t, Token) else Token(str(t)) for t in item])
            except ValueError as exc:
                raise ValueError(f"sentence {k}: {exc}") from None
        else:
            raise TypeError(f"sentence {k}: cannot interpret {type(item).__name__} as tokens")
    return out


def check_label_sequences(y, X, scheme: LabelScheme = DEFAULT_SCHEME) -> list[list[int]]:
    """Label strings or indices per sentence, aligned with ``X`` and BIO-valid."""
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"{len(X)} sentences but {len(y)} label sequences")
    out = []
    for k, (labels, tokens) in enumerate(zip(y, X)):
        labels = [scheme.index(lab) if isinstance(lab, str) else int(lab) for lab in labels]
        if len(labels) != len(tokens):
            raise ValueError(f"sentence {k}: {len(tokens)} tokens but {len(labels)} labels")
        check_bio(labels, scheme)
        out.append(labels)
    return out


def as_sentences(X, y=None, scheme: LabelScheme = DEFAULT_SCHEME) -> list[Sentence]:
    if y is None and all(isinstance(s, Sentence) for s in X):
        return list(X)
    tokens = check_token_sequences(X)
    if y is None:
        return [Sentence(t) for t in tokens]
    labels = check_label_sequences(y, tokens, scheme)
    return [Sentence(t, lab) for t, lab in zip(tokens, labels)]
