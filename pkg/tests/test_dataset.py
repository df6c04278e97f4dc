import json
import logging
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aaetag.dataset import (
    HABITUAL_BE,
    MULTIPLE_NEGATION,
    Dataset,
    DatasetError,
    Record,
    Template,
    augment_habitual,
    balance,
    kfold,
    load_dataset,
    load_substitution_lexicon,
    load_templates,
    parse_ratio,
    render,
    template_from_record,
    write_jsonl,
    write_tsv,
)
from aaetag.habitual import extract_be_context

from conftest import write_tsv as write_rows


def make(n_pos, n_neg, feature=HABITUAL_BE):
    recs = [Record(f"p{i}", f"pos {i}", {feature: 1}) for i in range(n_pos)]
    recs += [Record(f"n{i}", f"neg {i}", {feature: 0}) for i in range(n_neg)]
    return Dataset(tuple(recs))


def test_load_two_rows(tmp_path):
    path = write_rows(tmp_path / "d.tsv", ["id", "text", "habitual_be", "formality"],
                      [["a", "I be here.", 1, 0], ["b", "He is here, ok.", 0, ""]])
    data = load_dataset(path)
    assert len(data) == 2
    assert data.labels(HABITUAL_BE) == [1, 0]
    assert [r.formality for r in data] == [0, None]


def test_bad_label_names_row(tmp_path):
    path = write_rows(tmp_path / "d.tsv", ["id", "text", "habitual_be"], [["a", "x", 1], ["b", "y", 2]])
    with pytest.raises(DatasetError, match="row 3"):
        load_dataset(path)


def test_unknown_column(tmp_path):
    path = write_rows(tmp_path / "d.tsv", ["id", "text", "copula_deletion"], [["a", "x", 1]])
    with pytest.raises(DatasetError, match="unknown feature column"):
        load_dataset(path)


def test_ragged_row(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("id\ttext\thabitual_be\na\tx\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset(path)


def test_missing_text_column(tmp_path):
    path = write_rows(tmp_path / "d.tsv", ["id", "habitual_be"], [["a", 1]])
    with pytest.raises(DatasetError, match="'text'"):
        load_dataset(path)


def test_empty_file(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("")
    assert len(load_dataset(path)) == 0


def test_duplicate_ids():
    with pytest.raises(DatasetError, match="duplicate"):
        Dataset((Record("a", "x"), Record("a", "y")))


def test_schema_enforced():
    with pytest.raises(DatasetError, match="schema"):
        Dataset((Record("a", "x", {"other": 1}),))


def test_missing_label_lookup():
    with pytest.raises(DatasetError, match="no label"):
        Record("a", "x").label(HABITUAL_BE)


def test_tsv_round_trip(tmp_path):
    data = Dataset((
        Record("a", "I don't be, like, late.", {HABITUAL_BE: 1, MULTIPLE_NEGATION: 0}, 1, "seed"),
        Record("b", "Quote 'this'.", {HABITUAL_BE: 0}, None, "augmented:t1"),
    ))
    write_tsv(data, tmp_path / "out.tsv")
    again = load_dataset(tmp_path / "out.tsv")
    assert list(again) == list(data)
    assert [r.augmented for r in again] == [False, True]


def test_jsonl(tmp_path):
    write_jsonl([Record("a", "x", {HABITUAL_BE: 1}, 0)], tmp_path / "o.jsonl")
    assert json.loads((tmp_path / "o.jsonl").read_text()) == {
        "id": "a", "text": "x", "labels": {HABITUAL_BE: 1}, "source": "", "formality": 0,
    }


def test_tab_in_text_rejected(tmp_path):
    with pytest.raises(DatasetError):
        write_tsv([Record("a", "x\ty", {HABITUAL_BE: 1})], tmp_path / "o.tsv")


@pytest.mark.parametrize("ratio, expected", [("1:1", 1), ("2:1", 2), ("1:3", 1 / 3), (0.5, 0.5), ((3, 2), 1.5)])
def test_parse_ratio(ratio, expected):
    assert float(parse_ratio(ratio)) == pytest.approx(expected)


def test_balance_to_parity():
    out = balance(make(100, 300), HABITUAL_BE, "1:1", seed=1)
    assert out.counts(HABITUAL_BE) == (100, 100)
    ids = [r.id for r in out]
    original = [r.id for r in make(100, 300)]
    assert ids == [i for i in original if i in set(ids)]


def test_balance_unattainable_states_maximum():
    with pytest.raises(DatasetError, match="max attainable 1"):
        balance(make(100, 300), HABITUAL_BE, "2:1")


def test_balance_intermediate_ratio():
    assert balance(make(100, 300), HABITUAL_BE, "1:2").counts(HABITUAL_BE) == (100, 200)
    assert balance(make(300, 100), HABITUAL_BE, "2:1").counts(HABITUAL_BE) == (200, 100)


def test_balance_deterministic():
    a = balance(make(50, 90), HABITUAL_BE, seed=7)
    b = balance(make(50, 90), HABITUAL_BE, seed=7)
    assert list(a) == list(b)


def test_balance_needs_both_classes():
    with pytest.raises(DatasetError):
        balance(make(5, 0), HABITUAL_BE)


def test_kfold_7740_records_gives_774_per_fold():
    plan = kfold(make(4009, 3731), HABITUAL_BE, 10, seed=0)
    assert plan.sizes() == [774] * 10


def test_kfold_small():
    plan = kfold(make(5, 5), HABITUAL_BE, 2)
    assert plan.sizes() == [5, 5]


def test_kfold_errors():
    with pytest.raises(DatasetError, match="at least 2"):
        kfold(make(5, 5), HABITUAL_BE, 1)
    with pytest.raises(DatasetError, match="too small"):
        kfold(make(3, 50), HABITUAL_BE, 5)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(0, 200), st.integers(0, 200), st.integers(0, 99))
def test_kfold_partitions_and_stratifies(folds, extra_pos, extra_neg, seed):
    n_pos, n_neg = folds + extra_pos, folds + extra_neg
    data = make(n_pos, n_neg)
    plan = kfold(data, HABITUAL_BE, folds, seed)
    seen = Counter()
    for f in range(folds):
        train, test = plan.split(data, f)
        assert len(train) + len(test) == len(data)
        seen.update(r.id for r in test)
        pos = sum(test.labels(HABITUAL_BE))
        assert abs(pos - len(test) * n_pos / len(data)) <= 2
    assert seen == Counter(r.id for r in data)
    assert max(plan.sizes()) - min(plan.sizes()) <= 1


def test_office_template_instantiation():
    t = Template.parse("office", "PRON be ADP DET NOUN ADP NUM .", 1)
    out = augment_habitual([], 20, [t], seed=4)
    assert any(r.text.split()[-1].rstrip(".").replace(":", "").isdigit() for r in out)
    assert len(out) == 20
    for r in out:
        assert r.label(HABITUAL_BE) == 1
        assert r.augmented and r.source == "augmented:office"
        assert r.text.endswith(".")
        extract_be_context(r.text)  # exactly one "be"


def test_augment_zero():
    assert augment_habitual([], 0) == []


def test_augment_deterministic():
    ts = load_templates()
    assert augment_habitual([], 30, ts, seed=9) == augment_habitual([], 30, ts, seed=9)
    assert augment_habitual([], 30, ts, seed=9) != augment_habitual([], 30, ts, seed=10)


def test_augment_skips_unfillable_templates(caplog):
    good = Template.parse("g", "PRON be ADJ .", 0)
    bad = Template.parse("b", "PRON be WIDGET .", 1)
    with caplog.at_level(logging.WARNING):
        out = augment_habitual([], 5, [good, bad], seed=0)
    assert "WIDGET" in caplog.text
    assert {r.source for r in out} == {"augmented:g"}


def test_augment_skips_templates_without_single_be(caplog):
    two = Template.parse("two", "PRON be ADJ and be ADJ .", 1)
    with pytest.raises(DatasetError):
        augment_habitual([], 5, [two])


def test_augment_from_seed_sentences():
    seed = Record("s1", "She be working at the store.", {HABITUAL_BE: 1})
    lex = load_substitution_lexicon()
    t = template_from_record(seed, HABITUAL_BE, lex)
    assert t.skeleton[1] == "be" and t.skeleton[-1] == "."
    out = augment_habitual([seed], 10, seed=2)
    assert all(r.label(HABITUAL_BE) == 1 and r.text != seed.text for r in out)


def test_shipped_templates_have_one_be():
    for t in load_templates():
        assert t.be_count() == 1, t.id


def test_render():
    assert render(["i", "be", "there", ",", "ok", "."]) == "I be there, ok."
