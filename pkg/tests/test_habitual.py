import json

import numpy as np
import pytest

from aaetag.dataset import HABITUAL_BE, Dataset, Record
from aaetag.habitual import (
    PAD,
    HabitualModel,
    HabitualTrainingError,
    MultipleBeError,
    ZeroBeError,
    extract_be_context,
    fit_habitual,
    predict_habitual,
    summarize_folds,
    train_habitual,
    vectorize,
)
from aaetag.synth import shipped_corpus


@pytest.fixture(scope="module")
def corpus():
    return shipped_corpus(HABITUAL_BE)


@pytest.fixture(scope="module")
def small(corpus):
    return corpus.subset(list(corpus)[:240])


@pytest.fixture(scope="module")
def model(corpus):
    return fit_habitual(list(corpus))


def test_context_window():
    ctx = extract_be_context("I be in my office by 7:30.")
    assert ctx.be_index == 1
    assert ctx.left_tokens == (PAD, PAD, "i")
    assert ctx.right_tokens == ("in", "my", "office")
    assert ctx.left_pos == (PAD, PAD, "PRON")
    assert ctx.right_pos == ("ADP", "DET", "NOUN")
    assert ctx.offsets == [-3, -2, -1, 1, 2, 3]


def test_context_pads_right_edge():
    ctx = extract_be_context("Just be", k=2)
    assert ctx.right_tokens == (PAD, PAD)
    assert ctx.left_tokens == (PAD, "just")


def test_context_errors():
    with pytest.raises(ZeroBeError):
        extract_be_context("I am here.")
    with pytest.raises(MultipleBeError):
        extract_be_context("Be who you be.")
    with pytest.raises(ValueError):
        extract_be_context("I be here.", k=0)


def test_feature_set_matches_golden(golden_dir):
    expected = json.loads((golden_dir / "office_features_k3.json").read_text())
    feats = vectorize(extract_be_context("I be in my office by 7:30."))
    assert sorted(feats) == expected
    assert set(feats.values()) == {1.0}


def test_pinned_predictions(model):
    assert predict_habitual(model, "I be in my office by 7:30.")[0] == 1
    assert predict_habitual(model, "You have to be careful.")[0] == 0


def test_flipped_labels_negate_weights(small):
    flipped = [Record(r.id, r.text, {HABITUAL_BE: 1 - r.label(HABITUAL_BE)}) for r in small]
    a = fit_habitual(list(small))
    b = fit_habitual(flipped)
    assert a.weights.keys() == b.weights.keys()
    for name, w in a.weights.items():
        assert b.weights[name] == pytest.approx(-w, abs=1e-6)


def test_same_seed_same_model(small):
    a = train_habitual(small, folds=3, seed=5)
    b = train_habitual(small, folds=3, seed=5)
    assert [r.model.to_dict() for r in a] == [r.model.to_dict() for r in b]


def test_fold_reports(small):
    results = train_habitual(small, folds=4, seed=1)
    assert [r.fold for r in results] == [0, 1, 2, 3]
    assert sum(r.n_test for r in results) == len(small)
    avg = summarize_folds(results)
    assert 0.0 <= avg.f1_weighted <= 1.0


def test_exclude_augmented_from_test(small):
    # relabel half the rows as hand-collected seeds
    recs = [Record(r.id, r.text, r.labels, None, "seed" if i % 2 else r.source) for i, r in enumerate(small)]
    mixed = small.subset(recs)
    results = train_habitual(mixed, folds=3, augmented_in_test=False)
    assert sum(r.n_test for r in results) == sum(1 for r in recs if not r.augmented)
    # augmented rows still train: each record sits in the training side of folds - 1 folds
    assert sum(r.n_train for r in results) == 2 * len(mixed)


def test_exclude_augmented_with_nothing_left(small):
    with pytest.raises(HabitualTrainingError, match="fold 0"):
        train_habitual(small, folds=3, augmented_in_test=False)


def test_model_round_trip(tmp_path, small):
    m = fit_habitual(list(small))
    m.save(tmp_path / "m.json")
    again = HabitualModel.load(tmp_path / "m.json")
    assert again.weights == pytest.approx(m.weights)
    s = "They be at the store by 9:00."
    assert again.proba(s) == pytest.approx(m.proba(s))


def test_model_validation():
    with pytest.raises(ValueError):
        HabitualModel({"bias": 0.0}, threshold=1.5)
    with pytest.raises(ValueError):
        HabitualModel({"bias": float("nan")})


def test_single_label_training_rejected():
    recs = [Record(f"r{i}", f"I be here {i}.", {HABITUAL_BE: 1}) for i in range(10)]
    with pytest.raises(HabitualTrainingError):
        fit_habitual(recs)


def test_training_rejects_sentences_without_one_be():
    data = Dataset((Record("a", "I am here.", {HABITUAL_BE: 0}),))
    with pytest.raises(ZeroBeError):
        train_habitual(data)


def test_unknown_features_are_ignored(model):
    p = model.proba("Zorblax be quuxing glorp.")
    assert 0.0 < p < 1.0
    assert np.isfinite(p)
