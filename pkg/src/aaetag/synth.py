"""Template-generated corpora standing in for the unreleased interview data.

Both generators are seeded and deterministic. The shipped TSVs under
``aaetag/data`` were produced by :func:`write_shipped_corpora`.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .dataset import (
    HABITUAL_BE,
    MULTIPLE_NEGATION,
    Dataset,
    Record,
    Template,
    augment_habitual,
    load_dataset,
    load_substitution_lexicon,
    load_templates,
    render,
    write_tsv,
)

# class sizes proportional to the 401/373 and 4,009/3,730 splits
HABITUAL_NEG, HABITUAL_POS = 518, 482
NEGATION_POS, NEGATION_NEG = 518, 482


def habitual_corpus(n_pos: int = HABITUAL_POS, n_neg: int = HABITUAL_NEG, seed: int = 0) -> Dataset:
    templates = load_templates()
    lexicon = load_substitution_lexicon()
    pos = augment_habitual([], n_pos, [t for t in templates if t.label == 1], lexicon, seed, id_prefix="hb-p")
    neg = augment_habitual(pos, n_neg, [t for t in templates if t.label == 0], lexicon, seed + 1, id_prefix="hb-n")
    records = pos + neg
    random.Random(seed).shuffle(records)
    return Dataset(tuple(records), (HABITUAL_BE,), notes="synthetic habitual-be corpus")


@dataclass(frozen=True)
class NegationTemplate:
    template: Template
    consistent: bool  # gold label agrees with the clause rule


def load_negation_templates(path: str | Path | None = None) -> list[NegationTemplate]:
    if path is None:
        text = resources.files("aaetag.data").joinpath("negation_templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return [
        NegationTemplate(Template.parse(t["id"], t["skeleton"], t["label"]), bool(t["consistent"]))
        for t in json.loads(text)["templates"]
    ]


def negation_corpus(n_pos: int = NEGATION_POS, n_neg: int = NEGATION_NEG, seed: int = 0) -> Dataset:
    """Sentences with at least one negator; ``source`` records the template
    and whether its gold label is rule-consistent."""
    lexicon = load_substitution_lexicon()
    templates = load_negation_templates()
    rng = random.Random(seed)
    records: list[Record] = []
    seen: set[str] = set()
    for label, target in ((1, n_pos), (0, n_neg)):
        pool = [t for t in templates if t.template.label == label]
        made, attempts = 0, 0
        while made < target and attempts < 200 * max(target, 1):
            attempts += 1
            nt = pool[rng.randrange(len(pool))]
            words = [rng.choice(lexicon[w]) if w in lexicon else w for w in nt.template.skeleton]
            text = render(words)
            if text in seen:
                continue
            seen.add(text)
            flag = "consistent" if nt.consistent else "inconsistent"
            records.append(
                Record(
                    f"mn-{'p' if label else 'n'}{made:05d}",
                    text,
                    {MULTIPLE_NEGATION: label},
                    None,
                    f"synthetic:{nt.template.id}:{flag}",
                )
            )
            made += 1
    rng.shuffle(records)
    return Dataset(tuple(records), (MULTIPLE_NEGATION,), notes="synthetic multiple-negation corpus")


def is_rule_consistent(record: Record) -> bool:
    return record.source.endswith(":consistent")


def shipped_corpus(feature: str) -> Dataset:
    name = {HABITUAL_BE: "habitual_corpus.tsv", MULTIPLE_NEGATION: "negation_corpus.tsv"}[feature]
    with resources.as_file(resources.files("aaetag.data").joinpath(name)) as path:
        return load_dataset(path, (feature,))


def write_shipped_corpora(directory: str | Path) -> None:
    directory = Path(directory)
    write_tsv(habitual_corpus(), directory / "habitual_corpus.tsv")
    write_tsv(negation_corpus(), directory / "negation_corpus.tsv")


if __name__ == "__main__":
    write_shipped_corpora(Path(__file__).parent / "data")
