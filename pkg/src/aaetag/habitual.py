"""Habitual Be classifier over token and POS windows around "be".

A linear-logistic stand-in for a transformer baseline: each sentence with
exactly one "be" is turned into sparse indicator features (per-slot
tokens and POS tags, plus bigrams over adjacent slots) and scored by a
ridge-stabilised logistic regression from :mod:`aaetag.glm`.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import glm
from .dataset import HABITUAL_BE, Dataset, Record, kfold
from .metrics import ClassificationReport, average_reports, score
from .pos import tag_pos
from .text import Sentence, as_sentence

PAD = "<pad>"
BIAS = "bias"
DEFAULT_K = 3
DEFAULT_THRESHOLD = 0.5
DEFAULT_L2 = 1e-4


class BeCountError(ValueError):
    pass


class ZeroBeError(BeCountError):
    pass


class MultipleBeError(BeCountError):
    pass


class HabitualTrainingError(RuntimeError):
    def __init__(self, fold: int | None, message: str):
        super().__init__(f"fold {fold}: {message}" if fold is not None else message)
        self.fold = fold


@dataclass(frozen=True)
class BeContext:
    be_index: int
    k: int
    left_tokens: tuple[str, ...]
    right_tokens: tuple[str, ...]
    left_pos: tuple[str, ...]
    right_pos: tuple[str, ...]

    @property
    def token_window(self) -> tuple[str, ...]:
        return self.left_tokens + self.right_tokens

    @property
    def pos_window(self) -> tuple[str, ...]:
        return self.left_pos + self.right_pos

    @property
    def offsets(self) -> list[int]:
        return [*range(-self.k, 0), *range(1, self.k + 1)]


def extract_be_context(sentence: Sentence | str, k: int = DEFAULT_K) -> BeContext:
    """Window of ``k`` tokens (and tags) either side of the single "be".

    Raises ZeroBeError / MultipleBeError when the sentence does not hold
    exactly one "be" token.
    """
    if k < 1:
        raise ValueError("window size k must be >= 1")
    sentence = as_sentence(sentence)
    hits = [t.index for t in sentence.tokens if t.lower == "be"]
    if not hits:
        raise ZeroBeError(f"no 'be' token in {sentence.raw!r}")
    if len(hits) > 1:
        raise MultipleBeError(f"{len(hits)} 'be' tokens in {sentence.raw!r}")
    i = hits[0]
    lowers = [t.lower for t in sentence.tokens]
    tags = tag_pos(sentence)
    n = len(lowers)

    def grab(seq, lo, hi):
        return tuple(seq[j] if 0 <= j < n else PAD for j in range(lo, hi))

    return BeContext(
        be_index=i,
        k=k,
        left_tokens=grab(lowers, i - k, i),
        right_tokens=grab(lowers, i + 1, i + k + 1),
        left_pos=grab(tags, i - k, i),
        right_pos=grab(tags, i + 1, i + k + 1),
    )


def _slot(offset: int) -> str:
    return f"{offset:+d}"


def vectorize(ctx: BeContext) -> dict[str, float]:
    """Sparse indicator features for one context; ``bias`` is always 1."""
    feats = {BIAS: 1.0}
    offs = ctx.offsets
    toks, tags = ctx.token_window, ctx.pos_window
    for o, tok, tag in zip(offs, toks, tags):
        feats[f"tok[{_slot(o)}]={tok}"] = 1.0
        feats[f"pos[{_slot(o)}]={tag}"] = 1.0
    for j in range(len(offs) - 1):
        a, b = _slot(offs[j]), _slot(offs[j + 1])
        feats[f"tok[{a},{b}]={toks[j]}|{toks[j + 1]}"] = 1.0
        feats[f"pos[{a},{b}]={tags[j]}|{tags[j + 1]}"] = 1.0
    return feats


@dataclass
class HabitualModel:
    weights: dict[str, float]
    k: int = DEFAULT_K
    threshold: float = DEFAULT_THRESHOLD
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not all(np.isfinite(w) for w in self.weights.values()):
            raise ValueError("model weights must be finite")

    def decision(self, feats: Mapping[str, float]) -> float:
        return sum(self.weights.get(name, 0.0) * v for name, v in feats.items())

    def proba(self, sentence: Sentence | str) -> float:
        return float(glm.sigmoid(self.decision(vectorize(extract_be_context(sentence, self.k)))))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "threshold": self.threshold,
            "metadata": self.metadata,
            "weights": dict(sorted(self.weights.items())),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", "utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "HabitualModel":
        return cls(
            weights={k: float(v) for k, v in data["weights"].items()},
            k=int(data.get("k", DEFAULT_K)),
            threshold=float(data.get("threshold", DEFAULT_THRESHOLD)),
            metadata=data.get("metadata", {}),
        )

    @classmethod
    def load(cls, path: str | Path) -> "HabitualModel":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


def predict_habitual(model: HabitualModel, sentence: Sentence | str) -> tuple[int, float]:
    p = model.proba(sentence)
    return int(p >= model.threshold), p


def build_matrix(
    feature_dicts: Sequence[Mapping[str, float]], vocab: Sequence[str]
) -> np.ndarray:
    col = {name: j for j, name in enumerate(vocab)}
    X = np.zeros((len(feature_dicts), len(vocab)))
    for i, feats in enumerate(feature_dicts):
        for name, v in feats.items():
            j = col.get(name)
            if j is not None:
                X[i, j] = v
    return X


def fit_habitual(
    records: Sequence[Record],
    k: int = DEFAULT_K,
    *,
    feature: str = HABITUAL_BE,
    l2: float = DEFAULT_L2,
    threshold: float = DEFAULT_THRESHOLD,
    min_count: int = 2,
    max_iter: int = 100,
) -> HabitualModel:
    """Train one model on ``records``.

    Features seen in fewer than ``min_count`` training sentences are
    dropped; the bias column is always kept and never penalized.
    """
    y = np.array([r.label(feature) for r in records], dtype=float)
    if len(set(y.tolist())) < 2:
        raise HabitualTrainingError(None, "training data hold a single label")
    feats = [vectorize(extract_be_context(Sentence.from_text(r.text, r.id), k)) for r in records]
    counts = Counter(name for f in feats for name in f)
    vocab = [BIAS] + sorted(n for n, c in counts.items() if c >= min_count and n != BIAS)
    X = build_matrix(feats, vocab)
    fit = glm.fit_logistic(X, y, vocab, l2=l2, max_iter=max_iter)
    weights = {name: float(w) for name, w in zip(vocab, fit.coef)}
    return HabitualModel(
        weights,
        k,
        threshold,
        {"n_train": len(records), "l2": l2, "min_count": min_count, "iterations": fit.iterations},
    )


@dataclass(frozen=True)
class FoldResult:
    fold: int
    model: HabitualModel
    report: ClassificationReport
    n_train: int
    n_test: int


def train_habitual(
    dataset: Dataset,
    k: int = DEFAULT_K,
    folds: int = 10,
    seed: int = 0,
    *,
    feature: str = HABITUAL_BE,
    augmented_in_test: bool = True,
    l2: float = DEFAULT_L2,
    threshold: float = DEFAULT_THRESHOLD,
    min_count: int = 2,
) -> list[FoldResult]:
    """Stratified k-fold training; one model and held-out report per fold.

    With ``augmented_in_test=False`` augmented records are still used for
    training but removed from the held-out folds.
    """
    for r in dataset:
        extract_be_context(r.text, k)  # fail fast on the single-"be" constraint
    plan = kfold(dataset, feature, folds, seed)
    results = []
    for f in range(folds):
        train, test = plan.split(dataset, f)
        if not augmented_in_test:
            test = test.subset(r for r in test if not r.augmented)
            if not len(test):
                raise HabitualTrainingError(f, "no non-augmented records left in the held-out fold")
        labels = set(train.labels(feature))
        if len(labels) < 2:
            raise HabitualTrainingError(f, "training fold holds a single label")
        try:
            model = fit_habitual(
                list(train), k, feature=feature, l2=l2, threshold=threshold, min_count=min_count
            )
        except glm.GLMError as exc:
            raise HabitualTrainingError(f, str(exc)) from exc
        model.metadata["fold"] = f
        preds = [predict_habitual(model, r.text)[0] for r in test]
        results.append(FoldResult(f, model, score(preds, test.labels(feature)), len(train), len(test)))
    return results


def summarize_folds(results: Sequence[FoldResult]) -> ClassificationReport:
    return average_reports([r.report for r in results])
