"""Recency and formality bias regressions over LLM prediction traces,
plus the probe-ordering run builder.

A trace is the ordered list of predictions exactly as sentences were sent
to the model. The recency covariate for position ``t`` is the share of the
previous ``window`` predictions equal to the prediction at ``t``; rows
with fewer than ``window`` predecessors are dropped, not padded.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import glm
from .dataset import Record

DEFAULT_WINDOW = 5


class BiasInputError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEntry:
    record_id: str
    predicted: int
    gold: int
    batch_id: int
    position: int


@dataclass(frozen=True)
class PredictionTrace:
    entries: tuple[TraceEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        last = None
        for e in self.entries:
            if e.predicted not in (0, 1) or e.gold not in (0, 1):
                raise BiasInputError(f"{e.record_id}: labels must be 0/1")
            if last is not None and e.position <= last:
                raise BiasInputError(f"positions must strictly increase (at {e.record_id})")
            last = e.position

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def predictions(self) -> list[int]:
        return [e.predicted for e in self.entries]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.entries)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PredictionTrace":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    entries.append(
                        TraceEntry(
                            str(d["record_id"]), int(d["predicted"]), int(d["gold"]),
                            int(d["batch_id"]), int(d["position"]),
                        )
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    raise BiasInputError(f"{path}:{lineno}: bad trace line ({exc})") from None
        return cls(tuple(entries))

    @classmethod
    def from_predictions(
        cls, predicted: Sequence[int], gold: Sequence[int], batch_size: int | None = None,
        ids: Sequence[str] | None = None,
    ) -> "PredictionTrace":
        ids = ids or [f"s{i:05d}" for i in range(len(predicted))]
        bs = batch_size or max(len(predicted), 1)
        return cls(tuple(
            TraceEntry(ids[i], int(p), int(g), i // bs, i)
            for i, (p, g) in enumerate(zip(predicted, gold))
        ))


def recency_feature(
    trace: PredictionTrace, window: int = DEFAULT_WINDOW, reset_per_batch: bool = False
) -> list[tuple[str, float]]:
    """(record id, share of the previous ``window`` predictions matching this one)."""
    if window < 1:
        raise BiasInputError("window must be >= 1")
    if len(trace) < window + 1:
        raise BiasInputError(f"trace has {len(trace)} rows; need at least {window + 1}")
    entries = trace.entries
    out = []
    for t, e in enumerate(entries):
        if t < window:
            continue
        prev = entries[t - window : t]
        if reset_per_batch and any(p.batch_id != e.batch_id for p in prev):
            continue
        matches = sum(1 for p in prev if p.predicted == e.predicted)
        out.append((e.record_id, matches / window))
    return out


def positive_share_feature(
    trace: PredictionTrace, window: int = DEFAULT_WINDOW, reset_per_batch: bool = False
) -> list[tuple[str, float]]:
    """(record id, share of the previous ``window`` predictions equal to 1).

    Unlike :func:`recency_feature` this does not look at the current
    prediction, so it is fixed before the row's outcome is drawn.
    """
    if window < 1:
        raise BiasInputError("window must be >= 1")
    if len(trace) < window + 1:
        raise BiasInputError(f"trace has {len(trace)} rows; need at least {window + 1}")
    entries = trace.entries
    out = []
    for t in range(window, len(entries)):
        prev = entries[t - window : t]
        if reset_per_batch and any(p.batch_id != entries[t].batch_id for p in prev):
            continue
        out.append((entries[t].record_id, sum(p.predicted for p in prev) / window))
    return out


COVARIATES = {"match": recency_feature, "positive_share": positive_share_feature}


@dataclass(frozen=True)
class BiasAnalysis:
    variable: str
    fit: glm.FitResult
    n_rows: int
    n_dropped: int
    # recency only: correlation of the covariate with gold, the all-correct-streak confound
    covariate_gold_corr: float | None = None

    @property
    def coef(self) -> float:
        return self.fit.coef_of(self.variable)

    @property
    def pvalue(self) -> float:
        return self.fit.pvalue_of(self.variable)

    def rows(self) -> list[tuple[str, float]]:
        label = self.variable.capitalize()
        return [
            (f"{label} β̂", self.coef),
            (f"{label} p", self.pvalue),
            ("Ground β̂", self.fit.coef_of("ground")),
            ("Ground p", self.fit.pvalue_of("ground")),
            ("Pseudo R²", self.fit.pseudo_r2),
        ]

    def to_dict(self) -> dict:
        d = {
            "variable": self.variable,
            "n_rows": self.n_rows,
            "n_dropped": self.n_dropped,
            "table": {name: value for name, value in self.rows()},
            "fit": self.fit.to_dict(),
        }
        if self.covariate_gold_corr is not None:
            d["covariate_gold_corr"] = self.covariate_gold_corr
        return d


def format_p(p: float) -> str:
    if math.isnan(p):
        return "nan"
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def render_table(columns: Mapping[str, BiasAnalysis]) -> str:
    """Side-by-side summaries: one column per analysis, rows as in the
    published regression tables."""
    names = list(columns)
    first = columns[names[0]]
    row_labels = [label for label, _ in first.rows()]
    width = max(len(r) for r in row_labels) + 2
    colw = max(10, *(len(n) + 2 for n in names))
    lines = [" " * width + "".join(f"{n:>{colw}}" for n in names)]
    for i, label in enumerate(row_labels):
        cells = []
        for n in names:
            value = columns[n].rows()[i][1]
            cells.append(format_p(value) if label.endswith(" p") else f"{value:.2f}")
        lines.append(f"{label:<{width}}" + "".join(f"{c:>{colw}}" for c in cells))
    return "\n".join(lines)


def _corr(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def run_recency_regression(
    trace: PredictionTrace,
    window: int = DEFAULT_WINDOW,
    reset_per_batch: bool = False,
    covariate: str = "match",
    **fit_kwargs,
) -> BiasAnalysis:
    """Regress prediction on [const, recency, ground].

    ``covariate="match"`` (default) is the share of recent predictions
    matching the current one. That quantity is a function of the response,
    so its Wald p-values are anti-conservative even for a predictor with
    no memory; ``"positive_share"`` is the predetermined alternative.
    """
    if covariate not in COVARIATES:
        raise BiasInputError(f"unknown covariate {covariate!r}; choose from {sorted(COVARIATES)}")
    if len(trace) <= window + 2:
        raise BiasInputError(f"trace has {len(trace)} rows; need more than {window + 2}")
    rec = dict(COVARIATES[covariate](trace, window, reset_per_batch))
    rows = [e for e in trace if e.record_id in rec]
    y = [e.predicted for e in rows]
    if len(set(y)) < 2:
        raise BiasInputError("predictions in the analysed rows are all one class")
    recency = [rec[e.record_id] for e in rows]
    gold = [e.gold for e in rows]
    X = glm.DesignMatrix.from_columns({"recency": recency, "ground": gold})
    fit = glm.fit_logistic(X, y, **fit_kwargs)
    return BiasAnalysis("recency", fit, len(rows), len(trace) - len(rows), _corr(recency, gold))


def run_formality_regression(
    trace: PredictionTrace, flags: Mapping[str, int], **fit_kwargs
) -> BiasAnalysis:
    """Regress prediction on [const, formality flag, ground]."""
    missing = [e.record_id for e in trace if flags.get(e.record_id) is None]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise BiasInputError(f"{len(missing)} trace records lack a formality flag: {shown}")
    f = [int(flags[e.record_id]) for e in trace]
    if len(set(f)) < 2:
        raise BiasInputError("formality flags are all equal; the effect is not estimable")
    y = [e.predicted for e in trace]
    if len(set(y)) < 2:
        raise BiasInputError("predictions are all one class")
    X = glm.DesignMatrix.from_columns({"formality": f, "ground": [e.gold for e in trace]})
    return BiasAnalysis("formality", glm.fit_logistic(X, y, **fit_kwargs), len(trace), 0)


# -- simulators ---------------------------------------------------------------


def simulate_recency_trace(
    n: int,
    beta_recency: float,
    beta_ground: float = 2.0,
    window: int = DEFAULT_WINDOW,
    seed: int = 0,
    batch_size: int | None = None,
) -> PredictionTrace:
    """Predictor with logit P(pred=1) = beta_recency*share + beta_ground*gold.

    ``share`` is the fraction of the previous ``window`` predictions equal
    to 1 (0.5 before any prediction exists), i.e. the recency covariate
    evaluated for a positive prediction. Negative ``beta_recency`` makes
    the predictor avoid repeating recent positives. Gold labels are fair
    coin flips.
    """
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, 2, n)
    preds: list[int] = []
    for t in range(n):
        prev = preds[max(0, t - window) : t]
        share1 = sum(prev) / len(prev) if prev else 0.5
        logit = beta_recency * share1 + beta_ground * gold[t]
        preds.append(int(rng.random() < glm.sigmoid(logit)))
    return PredictionTrace.from_predictions(preds, gold.tolist(), batch_size)


def simulate_formality_trace(
    n: int,
    beta_formality: float,
    beta_ground: float = 2.0,
    seed: int = 0,
    flag_rate: float = 0.5,
) -> tuple[PredictionTrace, dict[str, int]]:
    """Predictor with logit = b0 + beta_formality*flag + beta_ground*gold."""
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, 2, n)
    flags = (rng.random(n) < flag_rate).astype(int)
    b0 = -(beta_formality * flag_rate + beta_ground * 0.5)
    p = glm.sigmoid(b0 + beta_formality * flags + beta_ground * gold)
    preds = (rng.random(n) < p).astype(int)
    trace = PredictionTrace.from_predictions(preds.tolist(), gold.tolist())
    return trace, {e.record_id: int(f) for e, f in zip(trace, flags)}


# -- ordering experiments ------------------------------------------------------

PATTERNS = ("alternating", "ones_then_zeros", "zeros_then_ones")
PROBES_PER_LABEL = 5


@dataclass(frozen=True)
class OrderingPlan:
    pattern: str
    batch_size: int = 10
    repetitions: int = 6
    seeds: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise BiasInputError(f"unknown pattern {self.pattern!r}; choose from {PATTERNS}")
        if self.batch_size < 1 or self.batch_size % (2 * PROBES_PER_LABEL):
            raise BiasInputError("batch size must be a positive multiple of 10")
        if self.seeds is not None and len(self.seeds) != self.repetitions:
            raise BiasInputError("need one shuffle seed per repetition")

    def seed_for(self, repetition: int) -> int:
        return self.seeds[repetition] if self.seeds is not None else repetition


@dataclass(frozen=True)
class OrderingRun:
    pattern: str
    batch_size: int
    repetition: int
    seed: int
    examples: tuple[Record, ...]
    batch: tuple[Record, ...]

    def gold_sequence(self, feature: str) -> list[int]:
        return [r.label(feature) for r in self.batch]

    def to_dict(self, feature: str) -> dict:
        return {
            "pattern": self.pattern,
            "batch_size": self.batch_size,
            "repetition": self.repetition,
            "seed": self.seed,
            "examples": [{"id": r.id, "text": r.text, "gold": r.label(feature)} for r in self.examples],
            "batch": [{"id": r.id, "text": r.text, "gold": r.label(feature)} for r in self.batch],
        }


def label_pattern(pattern: str, per_label: int = PROBES_PER_LABEL) -> list[int]:
    if pattern == "alternating":
        return [1 - (i % 2) for i in range(2 * per_label)]
    if pattern == "ones_then_zeros":
        return [1] * per_label + [0] * per_label
    if pattern == "zeros_then_ones":
        return [0] * per_label + [1] * per_label
    raise BiasInputError(f"unknown pattern {pattern!r}")


def _arrange(ones: list[Record], zeros: list[Record], pattern: str, rng: random.Random) -> list[Record]:
    ones, zeros = ones[:], zeros[:]
    rng.shuffle(ones)
    rng.shuffle(zeros)
    it1, it0 = iter(ones), iter(zeros)
    return [next(it1) if lab else next(it0) for lab in label_pattern(pattern)]


def build_ordering_runs(
    probes: Sequence[Record], plan: OrderingPlan, feature: str
) -> list[OrderingRun]:
    """Expand one plan into ``plan.repetitions`` runs.

    The label sequence is fixed by the pattern; each repetition's seed
    decides which probe fills which slot. The few-shot ``examples`` are one
    arranged pass over the probes, and the ``batch`` is ``batch_size / 10``
    independently arranged passes.
    """
    ones = [p for p in probes if p.label(feature) == 1]
    zeros = [p for p in probes if p.label(feature) == 0]
    if len(probes) != 2 * PROBES_PER_LABEL or len(ones) != PROBES_PER_LABEL:
        raise BiasInputError(
            f"need exactly {PROBES_PER_LABEL} probes per gold label, "
            f"got {len(ones)} positive and {len(zeros)} negative"
        )
    runs = []
    for rep in range(plan.repetitions):
        seed = plan.seed_for(rep)
        rng = random.Random(seed)
        examples = _arrange(ones, zeros, plan.pattern, rng)
        batch: list[Record] = []
        for _ in range(plan.batch_size // (2 * PROBES_PER_LABEL)):
            batch.extend(_arrange(ones, zeros, plan.pattern, rng))
        runs.append(OrderingRun(plan.pattern, plan.batch_size, rep, seed, tuple(examples), tuple(batch)))
    return runs


def default_ordering_plans(repetitions: int = 6) -> list[OrderingPlan]:
    """Grouped orderings at batch sizes 10 and 30: four configurations."""
    return [
        OrderingPlan(pattern, size, repetitions)
        for size in (10, 30)
        for pattern in ("ones_then_zeros", "zeros_then_ones")
    ]


def probes_from_records(records: Iterable[Record], feature: str) -> list[Record]:
    return [r for r in records if feature in r.labels]
