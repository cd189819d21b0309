"""Rule-based baseline: spelling features plus a training-set lexicon."""

from __future__ import annotations

from collections import Counter, defaultdict

from .corpus import DEFAULT_SCHEME, LabelScheme, spans_from_bio
from .features import TYPE_FEATURE, FeatureConfig, compute_features, default_config

LEXICON_TYPES = ("attacker", "attack method", "attack target")

# Narrow patterns first; URL outranks domain because URLs contain domains.
PRECEDENCE = ("vulnerability", "file hash", "URL", "e-mail address", "file information", "IPv4",
              "domain", "malware")


def build_lexicon(train_set, scheme: LabelScheme = DEFAULT_SCHEME) -> dict[str, str]:
    """Map every surface inside an attacker/method/target span to its majority type.

    Ties go to the type listed first in the scheme.
    """
    votes: dict[str, Counter] = defaultdict(Counter)
    for sent in train_set:
        for span in spans_from_bio(sent.gold_labels, scheme):
            if span.entity_type not in LEXICON_TYPES:
                continue
            for tok in sent.tokens[span.start:span.end]:
                votes[tok.surface][span.entity_type] += 1
    order = {t: i for i, t in enumerate(scheme.entity_types)}
    return {surface: min(c, key=lambda t: (-c[t], order[t])) for surface, c in votes.items()}


def pattern_type(token, config: FeatureConfig | None = None) -> str | None:
    v = compute_features(token, config or default_config())
    for t in PRECEDENCE:
        if v[TYPE_FEATURE[t]]:
            return t
    return None


def baseline_tag(tokens, lexicon, config: FeatureConfig | None = None,
                 scheme: LabelScheme = DEFAULT_SCHEME) -> list[int]:
    """Single-token B- labels from features, else the lexicon, else O."""
    config = config or default_config()
    out = []
    for tok in getattr(tokens, "tokens", tokens):
        surface = getattr(tok, "surface", tok)
        t = pattern_type(surface, config)
        if t is None:
            t = lexicon.get(surface)
        out.append(scheme.outside if t is None else scheme.begin(t))
    return out
