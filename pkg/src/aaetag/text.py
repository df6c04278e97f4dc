"""Tokenization and clause segmentation shared by the taggers.

The tokenizer is deliberately small: whitespace splitting, punctuation
peeled into its own tokens, and a handful of word-internal joiners kept
intact so that negators like ``ain't`` and times like ``7:30`` survive.

    >>> [t.surface for t in tokenize("I ain't step on no dog.")]
    ['I', "ain't", 'step', 'on', 'no', 'dog', '.']
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

WORD = "word"
PUNCT = "punctuation"

APOSTROPHES = frozenset("'’ʼ")
HYPHENS = frozenset("-‐")
# joined only when both neighbours are digits: 7:30, 3.5, 1,000
NUMERIC_JOINERS = frozenset(":.,")

_CHUNK = re.compile(r"\S+")


def is_punct_char(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_apostrophes(text: str) -> str:
    return text.replace("’", "'").replace("ʼ", "'")


@dataclass(frozen=True)
class Token:
    surface: str
    lower: str
    index: int
    start: int
    end: int
    kind: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def is_punct(self) -> bool:
        return self.kind == PUNCT


@dataclass(frozen=True)
class Sentence:
    id: str
    raw: str
    tokens: tuple[Token, ...]

    @classmethod
    def from_text(cls, raw: str, id: str = "") -> "Sentence":
        return cls(id=id, raw=raw, tokens=tuple(tokenize(raw)))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[Token]:
        return [t for t in self.tokens if not t.is_punct]


@dataclass(frozen=True)
class Clause:
    start: int
    end: int
    boundary_cause: str  # sentence_start | punctuation | conjunction

    @property
    def token_range(self) -> tuple[int, int]:
        return (self.start, self.end)


def _is_joiner(chunk: str, i: int) -> bool:
    if i == 0 or i == len(chunk) - 1:
        return False
    ch, before, after = chunk[i], chunk[i - 1], chunk[i + 1]
    if ch in APOSTROPHES or ch in HYPHENS:
        return before.isalnum() and after.isalnum()
    if ch in NUMERIC_JOINERS:
        return before.isdigit() and after.isdigit()
    return False


def _split_chunk(chunk: str) -> Iterable[tuple[int, int, str]]:
    i, n = 0, len(chunk)
    while i < n:
        ch = chunk[i]
        if is_punct_char(ch) and not _is_joiner(chunk, i):
            j = i + 1
            # runs of one mark ("--", "...") form a single token
            while j < n and chunk[j] == ch:
                j += 1
            yield i, j, PUNCT
        else:
            j = i + 1
            while j < n and not (is_punct_char(chunk[j]) and not _is_joiner(chunk, j)):
                j += 1
            yield i, j, WORD
        i = j


def tokenize(raw: str) -> list[Token]:
    """Split ``raw`` into word and punctuation tokens with character spans."""
    tokens: list[Token] = []
    for m in _CHUNK.finditer(raw):
        base = m.start()
        for s, e, kind in _split_chunk(m.group()):
            surface = raw[base + s : base + e]
            tokens.append(
                Token(surface, surface.casefold(), len(tokens), base + s, base + e, kind)
            )
    return tokens


def detokenize(raw: str, tokens: list[Token] | tuple[Token, ...]) -> str:
    """Rebuild text from token spans, keeping the original gaps."""
    out, pos = [], 0
    for t in tokens:
        out.append(raw[pos : t.start])
        out.append(t.surface)
        pos = t.end
    out.append(raw[pos:])
    return "".join(out)


@dataclass(frozen=True)
class BoundaryConfig:
    punctuation: frozenset[str]
    conjunctions: frozenset[str] = field(default_factory=frozenset)

    def is_boundary_punct(self, surface: str) -> bool:
        if surface in self.punctuation:
            return True
        # "..." counts as a boundary when "." does
        return len(set(surface)) == 1 and surface[0] in self.punctuation

    def is_conjunction(self, lower: str) -> bool:
        return lower in self.conjunctions

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryConfig":
        try:
            punct = data["punctuation"]
            conj = data["conjunctions"]
        except KeyError as exc:
            raise ValueError(f"boundary config missing key {exc}") from None
        return cls(frozenset(punct), frozenset(c.casefold() for c in conj))


def load_boundary_config(path: str | Path) -> BoundaryConfig:
    with open(path, encoding="utf-8") as fh:
        return BoundaryConfig.from_dict(json.load(fh))


_DEFAULT_BOUNDARIES: BoundaryConfig | None = None


def default_boundary_config() -> BoundaryConfig:
    global _DEFAULT_BOUNDARIES
    if _DEFAULT_BOUNDARIES is None:
        text = resources.files("aaetag.data").joinpath("boundaries.json").read_text("utf-8")
        _DEFAULT_BOUNDARIES = BoundaryConfig.from_dict(json.loads(text))
    return _DEFAULT_BOUNDARIES


def as_sentence(sentence: Sentence | str) -> Sentence:
    if isinstance(sentence, Sentence):
        return sentence
    return Sentence.from_text(sentence)


def segment_clauses(
    sentence: Sentence | str, config: BoundaryConfig | None = None
) -> list[Clause]:
    """Split a sentence into clauses at boundary punctuation and conjunctions.

    A conjunction opens the clause it belongs to. Boundary punctuation is
    not part of any clause, and consecutive boundaries yield no empty
    clause. Ranges are half-open over token indices and together cover
    every word token exactly once.
    """
    sentence = as_sentence(sentence)
    config = config or default_boundary_config()
    clauses: list[Clause] = []
    first: int | None = None
    last = 0
    cause = pending = "sentence_start"

    def close() -> None:
        nonlocal first
        if first is not None:
            clauses.append(Clause(first, last, cause))
            first = None

    for tok in sentence.tokens:
        if tok.is_punct:
            if config.is_boundary_punct(tok.surface):
                close()
                pending = "punctuation"
            continue
        if config.is_conjunction(tok.lower):
            close()
            pending = "conjunction"
        if first is None:
            first = tok.index
            cause = pending if clauses else "sentence_start"
        last = tok.index + 1
    close()
    return clauses
