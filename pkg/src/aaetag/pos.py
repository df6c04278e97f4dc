"""Deterministic lexicon + suffix POS tagger.

Lookup order per token: closed-class lexicon, then digit and suffix
heuristics, then NOUN. The tables live in ``data/pos_lexicon.json`` and
``data/pos_suffixes.json``. This is not a statistical tagger and makes
no AAE-specific adaptations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .text import Sentence, as_sentence, normalize_apostrophes

TAGSET = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET",
    "ADP", "CONJ", "NUM", "PART", "PUNCT", "X",
)
BE_FORMS = frozenset({"be", "been", "being", "am", "is", "are", "was", "were", "ain't"})


@dataclass(frozen=True)
class PosTables:
    lexicon: dict[str, str]
    suffixes: tuple[tuple[str, str], ...]
    min_stem: int = 2

    def __post_init__(self):
        bad = {t for t in self.lexicon.values()} | {t for _, t in self.suffixes}
        bad -= set(TAGSET)
        if bad:
            raise ValueError(f"unknown tags in POS tables: {sorted(bad)}")

    def tag_word(self, lower: str) -> str:
        form = normalize_apostrophes(lower)
        if form in BE_FORMS:
            return "VERB"
        tag = self.lexicon.get(form)
        if tag is not None:
            return tag
        if any(ch.isdigit() for ch in form):
            return "NUM"
        for suffix, tag in self.suffixes:
            if form.endswith(suffix) and len(form) - len(suffix) >= self.min_stem:
                return tag
        return "NOUN"


_TABLES: PosTables | None = None


def default_tables() -> PosTables:
    global _TABLES
    if _TABLES is None:
        pkg = resources.files("aaetag.data")
        lex = json.loads(pkg.joinpath("pos_lexicon.json").read_text("utf-8"))["lexicon"]
        suf = json.loads(pkg.joinpath("pos_suffixes.json").read_text("utf-8"))
        _TABLES = PosTables(
            lexicon=lex,
            suffixes=tuple((s, t) for s, t in suf["suffixes"]),
            min_stem=suf.get("min_stem", 2),
        )
    return _TABLES


def tag_pos(sentence: Sentence | str, tables: PosTables | None = None) -> list[str]:
    """One tag per token, aligned with ``sentence.tokens``."""
    sentence = as_sentence(sentence)
    tables = tables or default_tables()
    return ["PUNCT" if t.is_punct else tables.tag_word(t.lower) for t in sentence.tokens]
