"""Rule-based Multiple Negation tagger.

A sentence is tagged positive when some clause holds two or more negators.
Clauses come from :func:`aaetag.text.segment_clauses`, so the only notion
of scope is punctuation and conjunctions. Sentences like "I didn't ask you
not to come", where the negators sit in different constituents with no
boundary token between them, are tagged positive even though annotators
would mark them negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .text import BoundaryConfig, Sentence, as_sentence, normalize_apostrophes, segment_clauses

POSITIVE = 1
NEGATIVE = 0


@dataclass(frozen=True)
class NegatorLexicon:
    entries: frozenset[str]
    nt_suffix: bool = True

    def __post_init__(self):
        if not self.entries:
            raise ValueError("negator lexicon is empty")
        bad = [e for e in self.entries if e != e.casefold()]
        if bad:
            raise ValueError(f"negator entries must be lowercase: {sorted(bad)}")

    def is_negator(self, lower: str) -> bool:
        form = normalize_apostrophes(lower)
        if form in self.entries:
            return True
        return self.nt_suffix and form.endswith("n't")

    @classmethod
    def from_dict(cls, data: dict) -> "NegatorLexicon":
        if "negators" not in data:
            raise ValueError("lexicon file needs a 'negators' list")
        entries = frozenset(normalize_apostrophes(e) for e in data["negators"])
        return cls(entries, bool(data.get("nt_suffix", True)))


def load_lexicon(path: str | Path) -> NegatorLexicon:
    with open(path, encoding="utf-8") as fh:
        return NegatorLexicon.from_dict(json.load(fh))


_DEFAULT: NegatorLexicon | None = None


def default_lexicon() -> NegatorLexicon:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("aaetag.data").joinpath("negators.json").read_text("utf-8")
        _DEFAULT = NegatorLexicon.from_dict(json.loads(text))
    return _DEFAULT


def find_negators(
    sentence: Sentence | str, lexicon: NegatorLexicon | None = None
) -> list[int]:
    """Token indices of negators, ascending."""
    sentence = as_sentence(sentence)
    lexicon = lexicon or default_lexicon()
    return [t.index for t in sentence.tokens if not t.is_punct and lexicon.is_negator(t.lower)]


def negators_per_clause(
    sentence: Sentence | str,
    lexicon: NegatorLexicon | None = None,
    boundaries: BoundaryConfig | None = None,
) -> list[int]:
    sentence = as_sentence(sentence)
    negs = find_negators(sentence, lexicon)
    return [
        sum(1 for i in negs if c.start <= i < c.end)
        for c in segment_clauses(sentence, boundaries)
    ]


def tag_multiple_negation(
    sentence: Sentence | str,
    lexicon: NegatorLexicon | None = None,
    boundaries: BoundaryConfig | None = None,
) -> int:
    """Return 1 if some clause contains at least two negators, else 0."""
    counts = negators_per_clause(sentence, lexicon, boundaries)
    return POSITIVE if any(c >= 2 for c in counts) else NEGATIVE
