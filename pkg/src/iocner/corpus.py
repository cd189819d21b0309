"""Tokenization, the BIO label scheme, corpus files and span/label conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

# Table-1 entity names paired with the hyphenated spellings used in corpus files.
ENTITY_TYPES = (
    ("attacker", "attacker"),
    ("attack method", "attack-method"),
    ("attack target", "attack-target"),
    ("domain", "domain"),
    ("e-mail address", "email"),
    ("file hash", "file-hash"),
    ("file information", "file-info"),
    ("IPv4", "IPv4"),
    ("malware", "malware"),
    ("URL", "URL"),
    ("vulnerability", "vulnerability"),
)

STRIP_CHARS = ",;()\"'.!?"


class CorpusError(ValueError):
    """Malformed corpus input."""


class BIOError(CorpusError):
    """Label sequence violates the BIO scheme."""

    def __init__(self, message, position=None, sentence=None):
        super().__init__(message)
        self.position = position
        self.sentence = sentence


@dataclass(frozen=True)
class Token:
    surface: str

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")

    @property
    def chars(self) -> tuple[str, ...]:
        return tuple(self.surface)

    def __len__(self):
        return len(self.surface)

    def __str__(self):
        return self.surface


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    entity_type: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds ({self.start}, {self.end})")

    def as_tuple(self):
        return (self.start, self.end, self.entity_type)


class LabelScheme:
    """The BIO tag set over the eleven IOC entity types.

    Index 0 is ``O``; type ``k`` owns ``B`` at ``1 + 2k`` and ``I`` at ``2 + 2k``.
    Label strings use the hyphenated file spellings (``B-file-hash``) while
    entity types are reported under their display names (``file hash``).
    """

    def __init__(self, entity_types: Sequence[tuple[str, str]] = ENTITY_TYPES):
        self.entity_types = [name for name, _ in entity_types]
        self.codes = [code for _, code in entity_types]
        self.labels = ["O"]
        for code in self.codes:
            self.labels += [f"B-{code}", f"I-{code}"]
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        self._type_of_code = dict(zip(self.codes, self.entity_types))
        self._code_of_type = dict(zip(self.entity_types, self.codes))
        if len(self._index) != len(self.labels):
            raise ValueError("duplicate labels in scheme")

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return isinstance(other, LabelScheme) and self.labels == other.labels \
            and self.entity_types == other.entity_types

    def __repr__(self):
        return f"LabelScheme({len(self.entity_types)} types, {len(self.labels)} labels)"

    @property
    def outside(self) -> int:
        return 0

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise CorpusError(f"unknown label {label!r}") from None

    def label(self, index: int) -> str:
        return self.labels[index]

    def begin(self, entity_type: str) -> int:
        return 1 + 2 * self.entity_types.index(entity_type)

    def inside(self, entity_type: str) -> int:
        return 2 + 2 * self.entity_types.index(entity_type)

    def type_of(self, index: int) -> str | None:
        """Entity type of a label index, ``None`` for ``O``."""
        if index == 0:
            return None
        return self.entity_types[(index - 1) // 2]

    def is_begin(self, index: int) -> bool:
        return index > 0 and index % 2 == 1

    def is_inside(self, index: int) -> bool:
        return index > 0 and index % 2 == 0

    def code_of(self, entity_type: str) -> str:
        return self._code_of_type[entity_type]

    def allowed_transition(self, prev: int | None, cur: int) -> bool:
        """Whether ``cur`` may follow ``prev`` (``None`` = sentence start)."""
        if not self.is_inside(cur):
            return True
        if prev is None or prev == 0:
            return False
        return self.type_of(prev) == self.type_of(cur)

    def transition_mask(self):
        """Boolean (L+2)x(L+2) matrix of allowed transitions incl. BEGIN/END.

        Row/column ``L`` is BEGIN and ``L+1`` is END.
        """
        import numpy as np

        L = len(self)
        allowed = np.zeros((L + 2, L + 2), dtype=bool)
        for g in range(L):
            for h in range(L):
                allowed[g, h] = self.allowed_transition(g, h)
            allowed[L, g] = self.allowed_transition(None, g)
            allowed[g, L + 1] = True
        return allowed


DEFAULT_SCHEME = LabelScheme()


@dataclass
class Sentence:
    tokens: list[Token]
    gold_labels: list[int] | None = None

    def __post_init__(self):
        self.tokens = [t if isinstance(t, Token) else Token(t) for t in self.tokens]
        if self.gold_labels is not None:
            self.gold_labels = [int(x) for x in self.gold_labels]
            if len(self.gold_labels) != len(self.tokens):
                raise CorpusError(
                    f"{len(self.gold_labels)} labels for {len(self.tokens)} tokens")

    def __len__(self):
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def tokenize(text: str) -> list[Token]:
    """Split on whitespace and strip outer punctuation from each piece.

    A piece made only of punctuation is kept as is.
    """
    out = []
    for piece in text.split():
        stripped = piece.strip(STRIP_CHARS)
        out.append(Token(stripped or piece))
    return out


def check_bio(labels: Sequence[int], scheme: LabelScheme = DEFAULT_SCHEME) -> None:
    prev = None
    for i, lab in enumerate(labels):
        if not 0 <= lab < len(scheme):
            raise BIOError(f"label index {lab} out of range at position {i}", position=i)
        if not scheme.allowed_transition(prev, lab):
            before = "start" if prev is None else scheme.label(prev)
            raise BIOError(
                f"{scheme.label(lab)} at position {i} cannot follow {before}", position=i)
        prev = lab


def is_bio_valid(labels: Sequence[int], scheme: LabelScheme = DEFAULT_SCHEME) -> bool:
    try:
        check_bio(labels, scheme)
    except BIOError:
        return False
    return True


def repair_bio(labels: Sequence[int], scheme: LabelScheme = DEFAULT_SCHEME) -> list[int]:
    """Turn every I-t that cannot continue an entity into B-t."""
    out = []
    prev = None
    for lab in labels:
        if scheme.is_inside(lab) and not scheme.allowed_transition(prev, lab):
            lab = lab - 1
        out.append(lab)
        prev = lab
    return out


def spans_from_bio(labels: Sequence[int], scheme: LabelScheme = DEFAULT_SCHEME) -> list[EntitySpan]:
    check_bio(labels, scheme)
    spans = []
    start = None
    for i, lab in enumerate(labels):
        if scheme.is_inside(lab):
            continue
        if start is not None:
            spans.append(EntitySpan(start, i, scheme.type_of(labels[start])))
            start = None
        if scheme.is_begin(lab):
            start = i
    if start is not None:
        spans.append(EntitySpan(start, len(labels), scheme.type_of(labels[start])))
    return spans


def bio_from_spans(spans: Iterable[EntitySpan | tuple], length: int,
                   scheme: LabelScheme = DEFAULT_SCHEME) -> list[int]:
    labels = [scheme.outside] * length
    taken = [False] * length
    for span in spans:
        if not isinstance(span, EntitySpan):
            span = EntitySpan(*span)
        if span.end > length:
            raise CorpusError(f"span {span.as_tuple()} exceeds length {length}")
        if any(taken[span.start:span.end]):
            raise CorpusError(f"span {span.as_tuple()} overlaps another span")
        labels[span.start] = scheme.begin(span.entity_type)
        for i in range(span.start + 1, span.end):
            labels[i] = scheme.inside(span.entity_type)
        for i in range(span.start, span.end):
            taken[i] = True
    return labels


def parse_corpus(lines: Iterable[str], scheme: LabelScheme = DEFAULT_SCHEME,
                 repair: bool = False, source: str = "<input>") -> list[Sentence]:
    """Parse two-column ``surface<TAB>label`` lines into sentences."""
    sentences = []
    tokens: list[str] = []
    labels: list[int] = []
    first_line = None

    def flush():
        if not tokens:
            return
        labs = repair_bio(labels, scheme) if repair else list(labels)
        try:
            check_bio(labs, scheme)
        except BIOError as exc:
            raise BIOError(
                f"{source}: sentence {len(sentences) + 1} (line {first_line}): {exc}",
                position=exc.position, sentence=len(sentences)) from None
        sentences.append(Sentence(list(tokens), labs))
        tokens.clear()
        labels.clear()

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise CorpusError(f"{source}:{lineno}: expected 'token<TAB>label', got {line!r}")
        surface, label = parts[0], parts[1].strip()
        try:
            index = scheme.index(label)
        except CorpusError:
            raise CorpusError(f"{source}:{lineno}: unknown label {label!r}") from None
        if not tokens:
            first_line = lineno
        tokens.append(surface)
        labels.append(index)
    flush()
    return sentences


def load_corpus(path, scheme: LabelScheme = DEFAULT_SCHEME, repair: bool = False) -> list[Sentence]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_corpus(fh, scheme, repair=repair, source=str(path))


def format_corpus(sentences: Iterable[Sentence], labels: Iterable[Sequence[int]] | None = None,
                  scheme: LabelScheme = DEFAULT_SCHEME) -> str:
    """Render sentences in the two-column format; ``labels`` overrides gold labels."""
    blocks = []
    label_iter = iter(labels) if labels is not None else None
    for sent in sentences:
        labs = next(label_iter) if label_iter is not None else sent.gold_labels
        if labs is None:
            raise CorpusError("sentence has no labels to write")
        blocks.append("\n".join(f"{tok.surface}\t{scheme.label(lab)}"
                                for tok, lab in zip(sent.tokens, labs)))
    return "".join(block + "\n\n" for block in blocks)


def save_corpus(path, sentences, labels=None, scheme: LabelScheme = DEFAULT_SCHEME) -> None:
    Path(path).write_text(format_corpus(sentences, labels, scheme), encoding="utf-8")


def read_text_sentences(text: str) -> list[list[Token]]:
    """One sentence per non-blank line of raw text."""
    out = []
    for line in text.splitlines():
        toks = tokenize(line)
        if toks:
            out.append(toks)
    return out
