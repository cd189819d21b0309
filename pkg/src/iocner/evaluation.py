"""Span-level precision/recall/F1 and a synthetic annotated corpus generator."""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import DEFAULT_SCHEME, EntitySpan, LabelScheme, Sentence, bio_from_spans, spans_from_bio


@dataclass
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def support(self):
        return self.tp + self.fn


@dataclass
class Metrics:
    per_type: dict
    micro: PRF

    def __getitem__(self, entity_type):
        return self.per_type[entity_type]


def _label_seq(x):
    if isinstance(x, Sentence):
        if x.gold_labels is None:
            raise ValueError("sentence has no labels")
        return x.gold_labels
    return list(x)


def entity_prf(gold, pred, scheme: LabelScheme = DEFAULT_SCHEME, token_level=False) -> Metrics:
    """Exact-match span scores per entity type plus the pooled micro average.

    ``gold`` holds labelled sentences (or label sequences); ``pred`` holds
    label sequences or sentences whose labels are the predictions. With
    ``token_level`` every entity token is scored on its own, ignoring B/I.
    """
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    per_type = {t: PRF() for t in scheme.entity_types}
    for k, (g, p) in enumerate(zip(gold, pred)):
        g, p = _label_seq(g), _label_seq(p)
        if len(g) != len(p):
            raise ValueError(f"sentence {k}: {len(g)} gold labels but {len(p)} predicted")
        if token_level:
            gs = {(i, scheme.type_of(lab)) for i, lab in enumerate(g) if lab}
            ps = {(i, scheme.type_of(lab)) for i, lab in enumerate(p) if lab}
        else:
            gs = {s.as_tuple() for s in spans_from_bio(g, scheme)}
            ps = {s.as_tuple() for s in spans_from_bio(p, scheme)}
        for item in gs & ps:
            per_type[item[-1]].tp += 1
        for item in ps - gs:
            per_type[item[-1]].fp += 1
        for item in gs - ps:
            per_type[item[-1]].fn += 1
    micro = PRF(sum(m.tp for m in per_type.values()), sum(m.fp for m in per_type.values()),
                sum(m.fn for m in per_type.values()))
    return Metrics(per_type, micro)


def format_table(metrics: Metrics, title="") -> str:
    """Plain-text table: one P / R / F1 row per type, then the micro average."""
    width = max(len(t) for t in list(metrics.per_type) + ["micro average"]) + 2
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'':<{width}}{'Precision':>10}{'Recall':>10}{'F1-score':>10}{'support':>9}")
    for name, m in list(metrics.per_type.items()) + [("micro average", metrics.micro)]:
        lines.append(f"{name:<{width}}{100 * m.precision:>10.1f}{100 * m.recall:>10.1f}"
                     f"{100 * m.f1:>10.1f}{m.support:>9d}")
    return "\n".join(lines) + "\n"


def format_records(metrics: Metrics) -> str:
    """Machine-readable lines ``type<TAB>P<TAB>R<TAB>F1<TAB>support``."""
    lines = []
    for name, m in list(metrics.per_type.items()) + [("micro", metrics.micro)]:
        lines.append(f"{name}\t{m.precision!r}\t{m.recall!r}\t{m.f1!r}\t{m.support}")
    return "\n".join(lines) + "\n"


def parse_records(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        name, p, r, f, support = line.split("\t")
        out[name] = (float(p), float(r), float(f), int(support))
    return out


# ---------------------------------------------------- synthetic corpus

_FILLER_WORDS = (
    "the", "a", "an", "this", "that", "we", "they", "it", "was", "is", "were", "has", "have",
    "been", "also", "then", "after", "before", "during", "campaign", "report", "analysis",
    "sample", "activity", "researchers", "observed", "identified", "found", "noted", "used",
    "via", "from", "to", "in", "on", "with", "by", "of", "and", "for", "operation", "server",
    "payload", "infection", "network", "team", "second", "stage", "initial", "access", "new",
    "version", "traffic", "system", "host", "victim", "data", "recent", "later", "further",
)

_CONTEXT_BEFORE = (
    ("the", "indicator"), ("we", "observed"), ("analysts", "flagged"), ("linked", "to"),
    ("associated", "with"), ("the", "sample", "referenced"), ("traffic", "involving"),
    ("we", "saw"), ("activity", "around"), ("telemetry", "shows"),
)

_CONTEXT_AFTER = (
    ("was", "observed"), ("appeared", "again"), ("in", "the", "logs"), ("during", "triage"),
    ("according", "to", "telemetry"), ("in", "several", "incidents"), ("last", "month"),
    ("as", "well"),
)

_ATTACKER_STEMS = ("APT", "TA", "UNC", "FIN", "Group", "Team")
_ATTACKER_WORDS = ("Lazarus", "Sofacy", "Turla", "Kimsuky", "Carbanak", "Winnti", "Gamaredon",
                   "OceanLotus", "Equation", "Sandworm", "Charming", "Naikon", "Tick", "Patchwork")
_METHODS = ("spear phishing", "watering hole", "credential dumping", "DLL side-loading",
            "password spraying", "drive-by download", "supply chain compromise",
            "macro documents", "brute force", "lateral movement", "process hollowing",
            "domain fronting", "social engineering", "pass the hash")
_TARGETS = ("government agencies", "defense contractors", "financial institutions", "banks",
            "energy companies", "telecommunications providers", "universities", "journalists",
            "healthcare providers", "embassies", "manufacturers", "ministries", "NGOs",
            "airlines")
_MALWARE_PREFIXES = ("Trojan", "Backdoor", "Worm", "Ransom", "TrojanDownloader", "Spyware")
_MALWARE_PLATFORMS = ("Win32", "Win64", "MSIL", "Linux", "AndroidOS", "O97M")
_TLDS = ("com", "net", "org", "info", "ru", "cn", "biz", "top", "xyz", "date", "io", "co")
_WORDS = ("update", "secure", "cloud", "mail", "login", "office", "cdn", "service", "portal",
          "sync", "news", "check", "support", "account", "micro", "web", "data", "host",
          "online", "static")
_EXTS = ("exe", "dll", "doc", "bat", "ps1", "vbs", "tmp", "dat", "js", "lnk")
_DIRS = ("Windows", "Temp", "Users", "Public", "ProgramData", "AppData", "Roaming", "System32",
         "Local", "Microsoft")


def _word(rng, lo=4, hi=9):
    n = int(rng.integers(lo, hi))
    return "".join(rng.choice(list(string.ascii_lowercase), n))


def _ioc_surface(entity_type, rng):
    """One random surface form (a token list) of the given type."""
    pick = lambda seq: seq[int(rng.integers(len(seq)))]  # noqa: E731
    if entity_type == "attacker":
        if rng.random() < 0.5:
            return [f"{pick(_ATTACKER_STEMS)}{int(rng.integers(1, 100))}"]
        return [pick(_ATTACKER_WORDS) + _word(rng, 0, 3), pick(("Group", "Team", "Panda", "Bear"))]
    if entity_type == "attack method":
        return pick(_METHODS).split() + ([_word(rng)] if rng.random() < 0.3 else [])
    if entity_type == "attack target":
        return [_word(rng).capitalize()] * (rng.random() < 0.3) + pick(_TARGETS).split()
    if entity_type == "domain":
        return [f"{pick(_WORDS)}-{_word(rng)}.{pick(_TLDS)}"]
    if entity_type == "e-mail address":
        return [f"{_word(rng)}.{_word(rng, 3, 6)}@{pick(_WORDS)}{_word(rng, 2, 4)}.{pick(_TLDS)}"]
    if entity_type == "file hash":
        n = pick((32, 40, 64))
        return ["".join(rng.choice(list("0123456789abcdef"), n))]
    if entity_type == "file information":
        depth = int(rng.integers(1, 4))
        path = "\\".join(pick(_DIRS) for _ in range(depth))
        return [f"C:\\{path}\\{_word(rng)}.{pick(_EXTS)}"]
    if entity_type == "IPv4":
        ip = ".".join(str(int(x)) for x in rng.integers(1, 255, 4))
        return [ip + (f":{int(rng.integers(80, 9000))}" if rng.random() < 0.3 else "")]
    if entity_type == "malware":
        return [f"{pick(_MALWARE_PREFIXES)}:{pick(_MALWARE_PLATFORMS)}/{_word(rng).capitalize()}"
                f"{'.' + pick('ABCD') if rng.random() < 0.5 else ''}"]
    if entity_type == "URL":
        return [f"http{'s' * (rng.random() < 0.5)}://{pick(_WORDS)}{int(rng.integers(1, 9))}."
                f"{_word(rng)}.{pick(_TLDS)}/{_word(rng)}"]
    if entity_type == "vulnerability":
        return [f"CVE-{int(rng.integers(2008, 2024))}-{int(rng.integers(1000, 99999)):04d}"]
    raise ValueError(f"unknown entity type {entity_type!r}")


def _distractor(rng):
    """Non-IOC tokens that share some surface traits with IOCs."""
    kind = int(rng.integers(6))
    if kind == 0:
        return f"{int(rng.integers(1, 10))}.{int(rng.integers(0, 20))}.{int(rng.integers(0, 9))}"
    if kind == 1:
        return f"{_word(rng)}.{rng.choice(list(_EXTS))}"
    if kind == 2:
        return str(int(rng.integers(10, 100000)))
    if kind == 3:
        return "".join(rng.choice(list("0123456789abcdef"), int(rng.integers(8, 20))))
    if kind == 4:
        return f"{_word(rng)}:{int(rng.integers(1, 50))}"
    return _word(rng).upper()


@dataclass
class SyntheticSpec:
    """Sizes and knobs for ``make_synthetic_corpus``.

    ``type_counts`` weights how often each entity type is drawn (defaults to
    equal weights over all types). ``unseen_fraction`` of the test mentions
    use surface forms absent from the training set.
    """

    n_train: int = 300
    n_val: int = 60
    n_test: int = 100
    type_counts: dict = field(default_factory=dict)
    surfaces_per_type: int = 20
    filler_vocab: int = 60
    distractor_rate: float = 0.15
    max_mentions: int = 2
    unseen_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("every split needs at least one sentence")
        if any(c < 1 for c in self.type_counts.values()):
            raise ValueError("type counts must be >= 1")
        if not 0.0 <= self.unseen_fraction <= 1.0:
            raise ValueError("unseen_fraction must be in [0, 1]")


def make_synthetic_corpus(spec: SyntheticSpec | None = None, scheme: LabelScheme = DEFAULT_SCHEME):
    """Template sentences with feature-conformant IOCs: ``(train, val, test)``.

    This is a desk-scale stand-in for a real annotated report corpus. Each
    entity type owns a pool of surface forms that train and validation draw
    from; the test set draws ``unseen_fraction`` of its mentions from fresh
    forms never used in training.
    """
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(spec.seed)
    types = list(scheme.entity_types)
    weights = np.array([spec.type_counts.get(t, 1 if not spec.type_counts else 0) for t in types],
                       dtype=float)
    if weights.sum() == 0:
        raise ValueError("type_counts selects no entity type")
    types = [t for t, w in zip(types, weights) if w > 0]
    weights = weights[weights > 0] / weights.sum()
    filler = list(_FILLER_WORDS[:spec.filler_vocab])
    while len(filler) < spec.filler_vocab:
        filler.append(_word(rng))

    pools = {}
    for t in types:
        seen = set()
        pool = []
        while len(pool) < spec.surfaces_per_type:
            s = tuple(_ioc_surface(t, rng))
            if s not in seen:
                seen.add(s)
                pool.append(s)
        pools[t] = pool

    def sentence(mention_source):
        n_mentions = int(rng.integers(1, spec.max_mentions + 1))
        tokens, spans = [], []
        for _ in range(n_mentions):
            t = types[int(rng.choice(len(types), p=weights))]
            before = list(_CONTEXT_BEFORE[int(rng.integers(len(_CONTEXT_BEFORE)))])
            tokens += [filler[int(rng.integers(len(filler)))] for _ in range(int(rng.integers(0, 3)))]
            tokens += before
            surface = list(mention_source(t))
            spans.append(EntitySpan(len(tokens), len(tokens) + len(surface), t))
            tokens += surface
            if rng.random() < 0.6:
                tokens += list(_CONTEXT_AFTER[int(rng.integers(len(_CONTEXT_AFTER)))])
            if rng.random() < spec.distractor_rate * 4:
                tokens.append(_distractor(rng) if rng.random() < 0.5
                              else filler[int(rng.integers(len(filler)))])
        return Sentence(tokens, bio_from_spans(spans, len(tokens), scheme))

    def from_pool(t):
        pool = pools[t]
        return pool[int(rng.integers(len(pool)))]

    train = [sentence(from_pool) for _ in range(spec.n_train)]
    val = [sentence(from_pool) for _ in range(spec.n_val)]

    train_surfaces = set()
    for sent in train:
        for span in spans_from_bio(sent.gold_labels, scheme):
            train_surfaces.add(tuple(sent.surfaces[span.start:span.end]))
    seen_by_type = {t: [s for s in pools[t] if s in train_surfaces] for t in types}

    test = [sentence(lambda t: ("<slot>", t)) for _ in range(spec.n_test)]
    # Fill the placeholder slots: an exact fraction of mentions gets fresh forms.
    slots = [(k, span) for k, sent in enumerate(test)
             for span in spans_from_bio(sent.gold_labels, scheme)]
    n_unseen = int(round(spec.unseen_fraction * len(slots)))
    unseen_slots = set(rng.permutation(len(slots))[:n_unseen].tolist())
    fresh_used = set()
    rebuilt = {}
    for j, (k, span) in enumerate(slots):
        t = span.entity_type
        if j in unseen_slots or not seen_by_type[t]:
            while True:
                s = tuple(_ioc_surface(t, rng))
                if s not in train_surfaces and s not in fresh_used:
                    break
            fresh_used.add(s)
        else:
            options = seen_by_type[t]
            s = options[int(rng.integers(len(options)))]
        rebuilt.setdefault(k, []).append((span, s))
    test = [_fill_slots(test[k], rebuilt.get(k, []), scheme) for k in range(len(test))]
    return train, val, test


def _fill_slots(sent, fills, scheme):
    tokens, spans = [], []
    pos = 0
    surfaces = sent.surfaces
    for span, surface in sorted(fills, key=lambda x: x[0].start):
        tokens += surfaces[pos:span.start]
        spans.append(EntitySpan(len(tokens), len(tokens) + len(surface), span.entity_type))
        tokens += list(surface)
        pos = span.end
    tokens += surfaces[pos:]
    return Sentence(tokens, bio_from_spans(spans, len(tokens), scheme))


def unseen_mention_fraction(train, test, scheme: LabelScheme = DEFAULT_SCHEME) -> float:
    """Share of test mentions whose surface form never appears as a training mention."""
    seen = set()
    for sent in train:
        for span in spans_from_bio(sent.gold_labels, scheme):
            seen.add(tuple(sent.surfaces[span.start:span.end]))
    total = unseen = 0
    for sent in test:
        for span in spans_from_bio(sent.gold_labels, scheme):
            total += 1
            unseen += tuple(sent.surfaces[span.start:span.end]) not in seen
    return unseen / total if total else 0.0


def type_distribution(sentences, scheme: LabelScheme = DEFAULT_SCHEME) -> Counter:
    c = Counter()
    for sent in sentences:
        for span in spans_from_bio(sent.gold_labels, scheme):
            c[span.entity_type] += 1
    return c
