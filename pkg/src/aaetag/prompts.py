"""Zero-/few-shot prompt rendering and tolerant parsing of model replies.

Sentences are inserted verbatim between single quotes. There is no
escaping, so a sentence containing ``'`` can confuse the model; this is a
known hazard of the template, kept for comparability.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .dataset import HABITUAL_BE, MULTIPLE_NEGATION, Record
from .text import Sentence

ZERO_SHOT = "zero_shot"
FEW_SHOT = "few_shot"

ZERO_SHOT_LINE = (
    "{index}. Classify the sentence '{sentence}' as '{label_a}' or '{label_b}' "
    "in one word while preserving the numbering at the start of the prompt."
)
FEW_SHOT_PREAMBLE = "I have given a few classified train examples"
EXAMPLE_BLOCK = "Sentence: {sentence}\nLabel: {label}"

FEATURE_LABELS = {
    HABITUAL_BE: ("habitual be", "non-habitual be"),
    MULTIPLE_NEGATION: ("multiple negation", "not multiple negation"),
}

OK = "ok"
UNPARSED = "unparsed"
MISSING = "missing"


@dataclass(frozen=True)
class PromptSpec:
    """``label_a`` names the feature-present class (parsed as 1), ``label_b``
    the absent class (parsed as 0)."""

    label_a: str
    label_b: str
    mode: str = ZERO_SHOT
    examples: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(tuple(e) for e in self.examples))
        if not self.label_a.strip() or not self.label_b.strip():
            raise ValueError("labels must be nonempty")
        if self.label_a.casefold() == self.label_b.casefold():
            raise ValueError("labels must differ")
        if self.mode not in (ZERO_SHOT, FEW_SHOT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == FEW_SHOT and not self.examples:
            raise ValueError("few-shot prompts need at least one example")
        for _, label in self.examples:
            if label not in (self.label_a, self.label_b):
                raise ValueError(f"example label {label!r} is neither {self.label_a!r} nor {self.label_b!r}")

    def label_name(self, value: int) -> str:
        return self.label_a if value else self.label_b

    @classmethod
    def for_feature(
        cls, feature: str, mode: str = ZERO_SHOT, examples: Sequence[Record] = ()
    ) -> "PromptSpec":
        a, b = FEATURE_LABELS[feature]
        ex = tuple((r.text, a if r.label(feature) else b) for r in examples)
        return cls(a, b, mode, ex)


def _text(s: Sentence | str) -> str:
    return s.raw if isinstance(s, Sentence) else s


def build_zero_shot_prompt(batch: Sequence[Sentence | str], spec: PromptSpec) -> str:
    if not batch:
        raise ValueError("empty batch")
    return "\n".join(
        ZERO_SHOT_LINE.format(index=i, sentence=_text(s), label_a=spec.label_a, label_b=spec.label_b)
        for i, s in enumerate(batch, 1)
    )


def build_few_shot_prompt(batch: Sequence[Sentence | str], spec: PromptSpec) -> str:
    if not spec.examples:
        raise ValueError("few-shot prompts need at least one example")
    blocks = [EXAMPLE_BLOCK.format(sentence=s, label=label) for s, label in spec.examples]
    return "\n\n".join([FEW_SHOT_PREAMBLE, *blocks, build_zero_shot_prompt(batch, spec)])


def build_prompt(batch: Sequence[Sentence | str], spec: PromptSpec) -> str:
    if spec.mode == FEW_SHOT:
        return build_few_shot_prompt(batch, spec)
    return build_zero_shot_prompt(batch, spec)


# -- parsing -----------------------------------------------------------------

_NUMBERED = re.compile(r"^[ \t>*#_-]*\**[ \t]*(\d+)[ \t]*[.):\]]", re.MULTILINE)
_ECHO_TAIL = re.compile(r"preserving the numbering at the start of the prompt\.?", re.IGNORECASE)
_NEG_PREFIX = re.compile(r"^(non-|non |not an |not a |not |no )", re.IGNORECASE)


def _label_variants(label: str, other: str) -> list[str]:
    variants = {label.casefold()}
    # "non-habitual be" / "habitual be" -> "non-habitual" / "habitual"
    a, b = label.casefold().split(), other.casefold().split()
    k = 0
    while k < min(len(a), len(b)) and a[-1 - k] == b[-1 - k]:
        k += 1
    if 0 < k < min(len(a), len(b)):
        variants.add(" ".join(a[:-k]))
    for v in list(variants):
        m = _NEG_PREFIX.match(v)
        if m:
            rest = v[m.end():]
            variants.update(p + rest for p in ("non-", "non ", "not ", "not a ", "not an ", "no "))
    return sorted(variants)


def _variant_pattern(variant: str) -> str:
    words = re.split(r"[\s\-]+", variant)
    return r"[\s\-]*".join(re.escape(w) for w in words)


class LabelMatcher:
    """Leftmost match wins; at one position the longest label wins, so
    "non-habitual be" is never read as "habitual be"."""

    def __init__(self, spec: PromptSpec):
        owners = {}
        for value, (label, other) in ((1, (spec.label_a, spec.label_b)), (0, (spec.label_b, spec.label_a))):
            for v in _label_variants(label, other):
                owners.setdefault(v, value)
        ordered = sorted(owners, key=len, reverse=True)
        alternation = "|".join(f"({_variant_pattern(v)})" for v in ordered)
        self._values = [owners[v] for v in ordered]
        self._regex = re.compile(rf"(?<![\w-])(?:{alternation})(?![\w-])", re.IGNORECASE)

    def match(self, text: str) -> int | None:
        m = self._regex.search(text)
        if m is None:
            return None
        for i, group in enumerate(m.groups()):
            if group is not None:
                return self._values[i]
        return None


def _segments(raw: str) -> dict[int, str]:
    marks = list(_NUMBERED.finditer(raw))
    out: dict[int, str] = {}
    for j, m in enumerate(marks):
        end = marks[j + 1].start() if j + 1 < len(marks) else len(raw)
        out.setdefault(int(m.group(1)), raw[m.end():end])
    return out


def _strip_echo(segment: str) -> str:
    m = None
    for m in _ECHO_TAIL.finditer(segment):
        pass
    return segment[m.end():] if m else segment


def parse_response_detailed(
    raw: str, batch_size: int, spec: PromptSpec
) -> tuple[list[int | None], list[str]]:
    matcher = LabelMatcher(spec)
    segments = _segments(raw)
    if not segments:
        lines = [ln for ln in raw.splitlines() if ln.strip()]
        if batch_size == 1:
            segments = {1: raw}
        elif len(lines) == batch_size:
            segments = dict(enumerate(lines, 1))
    labels: list[int | None] = []
    status: list[str] = []
    for i in range(1, batch_size + 1):
        seg = segments.get(i)
        if seg is None:
            labels.append(None)
            status.append(MISSING)
            continue
        value = matcher.match(_strip_echo(seg))
        labels.append(value)
        status.append(OK if value is not None else UNPARSED)
    return labels, status


def parse_response(raw: str, batch_size: int, spec: PromptSpec) -> list[int | None]:
    """Labels for items 1..batch_size: 1 for ``label_a``, 0 for ``label_b``,
    None when the reply gives nothing usable for that item."""
    return parse_response_detailed(raw, batch_size, spec)[0]
