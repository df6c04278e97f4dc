"""Labeled sentence corpora: TSV/JSONL I/O, balancing, stratified folds
and template-substitution augmentation for Habitual Be."""

from __future__ import annotations

import csv
import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .pos import tag_pos
from .text import Sentence

log = logging.getLogger(__name__)

HABITUAL_BE = "habitual_be"
MULTIPLE_NEGATION = "multiple_negation"
FEATURES = (HABITUAL_BE, MULTIPLE_NEGATION)

RESERVED_COLUMNS = ("id", "text", "formality", "source")
AUGMENTED_SOURCE = "augmented"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    text: str
    labels: Mapping[str, int] = field(default_factory=dict)
    formality: int | None = None
    source: str = ""

    @property
    def augmented(self) -> bool:
        return self.source.startswith(AUGMENTED_SOURCE)

    def label(self, feature: str) -> int:
        try:
            return self.labels[feature]
        except KeyError:
            raise DatasetError(f"record {self.id!r} has no label for {feature!r}") from None

    def to_dict(self) -> dict:
        d = {"id": self.id, "text": self.text, "labels": dict(self.labels), "source": self.source}
        if self.formality is not None:
            d["formality"] = self.formality
        return d


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    schema: tuple[str, ...] = FEATURES
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "schema", tuple(self.schema))
        dupes = [k for k, c in Counter(r.id for r in self.records).items() if c > 1]
        if dupes:
            raise DatasetError(f"duplicate record ids: {dupes[:5]}")
        for r in self.records:
            unknown = set(r.labels) - set(self.schema)
            if unknown:
                raise DatasetError(f"record {r.id!r} has labels outside the schema: {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self, feature: str) -> list[int]:
        return [r.label(feature) for r in self.records]

    def counts(self, feature: str) -> tuple[int, int]:
        """(positives, negatives) for ``feature``."""
        ys = self.labels(feature)
        return sum(ys), len(ys) - sum(ys)

    def subset(self, records: Iterable[Record]) -> "Dataset":
        return Dataset(tuple(records), self.schema, self.notes)

    def sentences(self) -> list[Sentence]:
        return [Sentence.from_text(r.text, r.id) for r in self.records]


def _binary(cell: str, row: int, column: str) -> int:
    cell = cell.strip()
    if cell not in ("0", "1"):
        raise DatasetError(f"row {row}: column {column!r} must be 0 or 1, got {cell!r}")
    return int(cell)


def load_dataset(
    path: str | Path, schema: Sequence[str] = FEATURES, delimiter: str = "\t"
) -> Dataset:
    """Read a delimited file with columns ``id``, ``text``, one per feature,
    and optionally ``formality`` and ``source``.

    Feature columns absent from the file, and blank label cells, leave
    that label unset.
    Row numbers in errors count the header as row 1.
    """
    schema = tuple(schema)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter, quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            return Dataset((), schema)
        header = [h.strip() for h in header]
        for required in ("id", "text"):
            if required not in header:
                raise DatasetError(f"header is missing the {required!r} column")
        unknown = [h for h in header if h not in RESERVED_COLUMNS and h not in schema]
        if unknown:
            raise DatasetError(f"unknown feature column(s): {unknown}")
        records = []
        for rowno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DatasetError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            cells = dict(zip(header, row))
            # a blank label cell means "not annotated for this feature"
            labels = {f: _binary(cells[f], rowno, f) for f in schema if cells.get(f, "").strip()}
            formality = None
            if cells.get("formality", "").strip():
                formality = _binary(cells["formality"], rowno, "formality")
            records.append(
                Record(cells["id"], cells["text"], labels, formality, cells.get("source", ""))
            )
    try:
        return Dataset(tuple(records), schema)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def write_tsv(dataset: Dataset | Sequence[Record], path: str | Path) -> None:
    records = list(dataset)
    schema = dataset.schema if isinstance(dataset, Dataset) else FEATURES
    present = [f for f in schema if any(f in r.labels for r in records)]
    header = ["id", "text", *present]
    has_formality = any(r.formality is not None for r in records)
    if has_formality:
        header.append("formality")
    header.append("source")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\", lineterminator="\n")
        w.writerow(header)
        for r in records:
            if "\t" in r.text or "\n" in r.text:
                raise DatasetError(f"record {r.id!r}: text contains a tab or newline")
            row = [r.id, r.text, *(str(r.labels[f]) if f in r.labels else "" for f in present)]
            if has_formality:
                row.append("" if r.formality is None else str(r.formality))
            row.append(r.source)
            w.writerow(row)


def write_jsonl(records: Iterable[Record], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def parse_ratio(ratio: str | float | tuple[float, float]) -> Fraction:
    """``"1:1"``, ``2.0`` or ``(2, 1)`` -> positives per negative."""
    if isinstance(ratio, str):
        if ":" in ratio:
            a, b = ratio.split(":", 1)
            return Fraction(a.strip()) / Fraction(b.strip())
        return Fraction(ratio)
    if isinstance(ratio, tuple):
        return Fraction(ratio[0]) / Fraction(ratio[1])
    return Fraction(ratio).limit_denominator(10_000)


def balance(dataset: Dataset, feature: str, ratio="1:1", seed: int = 0) -> Dataset:
    """Subsample the majority class to reach ``ratio`` positives:negatives.

    The minority class is kept whole and the majority class may only
    shrink down to parity, so the attainable ratios run from the current
    one to 1:1. Survivors keep their original order.
    """
    r = parse_ratio(ratio)
    if r <= 0:
        raise DatasetError("ratio must be positive")
    pos = [x for x in dataset if x.label(feature) == 1]
    neg = [x for x in dataset if x.label(feature) == 0]
    if not pos or not neg:
        raise DatasetError(f"both classes of {feature!r} must be present to balance")
    if len(pos) >= len(neg):
        keep_pos, keep_neg = round(len(neg) * r), len(neg)
        lo, hi = Fraction(1), Fraction(len(pos), len(neg))
    else:
        keep_pos, keep_neg = len(pos), round(len(pos) / r)
        lo, hi = Fraction(len(pos), len(neg)), Fraction(1)
    if not lo <= r <= hi:
        raise DatasetError(
            f"ratio {float(r):.4g} unattainable by subsampling the majority class; "
            f"attainable positives:negatives ratios lie in [{float(lo):.4g}, {float(hi):.4g}] "
            f"(max attainable {float(hi):.4g})"
        )
    rng = random.Random(seed)
    dropped = set()
    if keep_pos < len(pos):
        dropped = {x.id for x in rng.sample(pos, len(pos) - keep_pos)}
    elif keep_neg < len(neg):
        dropped = {x.id for x in rng.sample(neg, len(neg) - keep_neg)}
    return dataset.subset(x for x in dataset if x.id not in dropped)


@dataclass(frozen=True)
class FoldPlan:
    assignments: Mapping[str, int]
    folds: int
    class_counts: tuple[tuple[int, int], ...]  # (positives, negatives) per fold

    def fold_ids(self, fold: int) -> list[str]:
        return [rid for rid, f in self.assignments.items() if f == fold]

    def split(self, dataset: Dataset, fold: int) -> tuple[Dataset, Dataset]:
        """(train, test) for one held-out fold; record order preserved."""
        if not 0 <= fold < self.folds:
            raise IndexError(fold)
        train = dataset.subset(r for r in dataset if self.assignments[r.id] != fold)
        test = dataset.subset(r for r in dataset if self.assignments[r.id] == fold)
        return train, test

    def sizes(self) -> list[int]:
        return [p + n for p, n in self.class_counts]


def kfold(dataset: Dataset, feature: str, folds: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified assignment of records to ``folds`` folds.

    Each class is shuffled and dealt round-robin, negatives continuing
    where positives stopped, so fold sizes differ by at most one and each
    fold's positive count is within one of the global share.
    """
    if folds < 2:
        raise DatasetError("need at least 2 folds")
    pos = [r.id for r in dataset if r.label(feature) == 1]
    neg = [r.id for r in dataset if r.label(feature) == 0]
    if len(pos) < folds or len(neg) < folds:
        raise DatasetError(
            f"class too small for {folds} folds ({len(pos)} positive, {len(neg)} negative)"
        )
    rng = random.Random(seed)
    rng.shuffle(pos)
    rng.shuffle(neg)
    assignments: dict[str, int] = {}
    for i, rid in enumerate(pos):
        assignments[rid] = i % folds
    for j, rid in enumerate(neg):
        assignments[rid] = (len(pos) + j) % folds
    counts = [[0, 0] for _ in range(folds)]
    for rid in pos:
        counts[assignments[rid]][0] += 1
    for rid in neg:
        counts[assignments[rid]][1] += 1
    ordered = {r.id: assignments[r.id] for r in dataset}
    return FoldPlan(ordered, folds, tuple((p, n) for p, n in counts))


# -- augmentation -----------------------------------------------------------

_SLOT = re.compile(r"^[A-Z][A-Z_]*$")
_ATTACH_LEFT = {".", ",", "!", "?", ";", ":"}


@dataclass(frozen=True)
class Template:
    """A sentence skeleton: UPPERCASE tokens are lexicon slots, the rest literal."""

    id: str
    skeleton: tuple[str, ...]
    label: int

    @classmethod
    def parse(cls, id: str, skeleton: str, label: int) -> "Template":
        return cls(id, tuple(skeleton.split()), int(label))

    @property
    def slots(self) -> list[str]:
        return [t for t in self.skeleton if _SLOT.match(t)]

    def be_count(self) -> int:
        return sum(1 for t in self.skeleton if t.casefold() == "be")


def load_templates(path: str | Path | None = None) -> list[Template]:
    if path is None:
        text = resources.files("aaetag.data").joinpath("habitual_templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    return [Template.parse(t["id"], t["skeleton"], t["label"]) for t in data["templates"]]


def load_substitution_lexicon(path: str | Path | None = None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("aaetag.data").joinpath("substitution_lexicon.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return {k: list(v) for k, v in json.loads(text)["slots"].items()}


def slot_for_token(lower: str, pos: str) -> str:
    if pos == "VERB" and lower.endswith("ing"):
        return "VERB_ING"
    return pos


def template_from_record(record: Record, feature: str, lexicon: Mapping[str, Sequence[str]]) -> Template:
    """Skeleton that mirrors a seed sentence: every word whose POS slot the
    lexicon can fill becomes a slot; "be", punctuation and the rest stay literal."""
    sent = Sentence.from_text(record.text, record.id)
    tags = tag_pos(sent)
    skeleton = []
    for tok, tag in zip(sent.tokens, tags):
        slot = slot_for_token(tok.lower, tag)
        if tok.lower == "be" or tok.is_punct or slot not in lexicon:
            skeleton.append(tok.lower if tok.lower == "be" else tok.surface)
        else:
            skeleton.append(slot)
    return Template(f"seed:{record.id}", tuple(skeleton), record.label(feature))


def render(words: Sequence[str]) -> str:
    out = ""
    for w in words:
        if not out:
            out = w
        elif w in _ATTACH_LEFT:
            out += w
        else:
            out += " " + w
    return out[:1].upper() + out[1:]


def augment_habitual(
    records: Sequence[Record],
    target_count: int,
    templates: Sequence[Template] | None = None,
    lexicon: Mapping[str, Sequence[str]] | None = None,
    seed: int = 0,
    *,
    feature: str = HABITUAL_BE,
    id_prefix: str = "aug",
    unique: bool = True,
) -> list[Record]:
    """Generate ``target_count`` sentences by same-slot word substitution.

    With ``templates=None`` the skeletons are derived from ``records`` (the
    seed sentences). Templates with a slot the lexicon cannot fill, or
    without exactly one "be", are skipped with a warning. Labels come from
    the template; ids are ``{id_prefix}{n:05d}`` and ``source`` is marked
    as augmented.
    """
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    if target_count == 0:
        return []
    lexicon = load_substitution_lexicon() if lexicon is None else lexicon
    # no substitution may introduce a second "be"
    lexicon = {k: [w for w in v if w.casefold() != "be"] for k, v in lexicon.items()}
    if templates is None:
        templates = [template_from_record(r, feature, lexicon) for r in records]
    usable = []
    for t in templates:
        missing = sorted({s for s in t.slots if not lexicon.get(s)})
        if missing:
            log.warning("skipping template %s: no lexicon entries for %s", t.id, missing)
        elif t.be_count() != 1:
            log.warning("skipping template %s: needs exactly one 'be'", t.id)
        else:
            usable.append(t)
    if not usable:
        raise DatasetError("no usable templates for augmentation")

    rng = random.Random(seed)
    seen = {r.text for r in records}
    out: list[Record] = []
    attempts, max_attempts = 0, 200 * target_count
    while len(out) < target_count and attempts < max_attempts:
        attempts += 1
        t = usable[rng.randrange(len(usable))]
        words = [rng.choice(lexicon[w]) if _SLOT.match(w) else w for w in t.skeleton]
        text = render(words)
        if unique and text in seen:
            continue
        seen.add(text)
        out.append(
            Record(
                f"{id_prefix}{len(out):05d}",
                text,
                {feature: t.label},
                None,
                f"{AUGMENTED_SOURCE}:{t.id}",
            )
        )
    if len(out) < target_count:
        log.warning("only %d unique sentences after %d attempts", len(out), attempts)
    return out

