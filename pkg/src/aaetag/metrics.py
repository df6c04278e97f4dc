"""Binary classification reports in the P+/P-/R+/R-/F1w layout.

The positive class is "feature present". Cells whose denominator is zero
are reported as 0.0 and the report's ``zero_division`` flag is raised,
which is how scikit-learn's default ``zero_division="warn"`` behaves.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Sequence


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class ClassificationReport:
    precision_pos: float
    precision_neg: float
    recall_pos: float
    recall_neg: float
    f1_pos: float
    f1_neg: float
    f1_weighted: float
    support_pos: int
    support_neg: int
    confusion: ConfusionCounts
    zero_division: bool = False

    ROWS = (
        ("P+", "precision_pos"),
        ("P-", "precision_neg"),
        ("R+", "recall_pos"),
        ("R-", "recall_neg"),
        ("F1w", "f1_weighted"),
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def render(self, title: str = "") -> str:
        lines = [title] if title else []
        for label, attr in self.ROWS:
            lines.append(f"{label:<5}{getattr(self, attr):>8.2f}")
        lines.append(f"{'n+':<5}{self.support_pos:>8d}")
        lines.append(f"{'n-':<5}{self.support_neg:>8d}")
        if self.zero_division:
            lines.append("(some cells had a zero denominator and were set to 0.00)")
        return "\n".join(lines)


def _ratio(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def _f1(p: float, r: float) -> tuple[float, bool]:
    if p + r == 0:
        return 0.0, True
    return 2 * p * r / (p + r), False


def report_from_counts(counts: ConfusionCounts) -> ClassificationReport:
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    if counts.total == 0:
        raise ValueError("cannot score an empty set")
    p_pos, z1 = _ratio(tp, tp + fp)
    p_neg, z2 = _ratio(tn, tn + fn)
    r_pos, z3 = _ratio(tp, tp + fn)
    r_neg, z4 = _ratio(tn, tn + fp)
    f_pos, z5 = _f1(p_pos, r_pos)
    f_neg, z6 = _f1(p_neg, r_neg)
    n_pos, n_neg = tp + fn, tn + fp
    f1w = (n_pos * f_pos + n_neg * f_neg) / (n_pos + n_neg)
    flagged = any((z1, z2, z3, z4, z5, z6))
    if flagged:
        warnings.warn("zero denominator in classification report; cell set to 0.0", stacklevel=3)
    return ClassificationReport(
        p_pos, p_neg, r_pos, r_neg, f_pos, f_neg, f1w, n_pos, n_neg, counts, flagged
    )


def confusion(preds: Sequence[int], golds: Sequence[int]) -> ConfusionCounts:
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    tp = fp = tn = fn = 0
    for p, g in zip(preds, golds):
        if p not in (0, 1) or g not in (0, 1):
            raise ValueError(f"labels must be 0/1, got pred={p!r} gold={g!r}")
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def score(preds: Sequence[int], golds: Sequence[int]) -> ClassificationReport:
    """Per-class precision/recall/F1 and class-size-weighted F1."""
    if not preds and not golds:
        raise ValueError("cannot score an empty set")
    return report_from_counts(confusion(preds, golds))


def average_reports(reports: Sequence[ClassificationReport]) -> ClassificationReport:
    """Unweighted mean of every rate; supports and confusion counts summed."""
    if not reports:
        raise ValueError("no reports to average")
    n = len(reports)
    means = {}
    for f in fields(ClassificationReport):
        if f.type in ("float",):
            means[f.name] = sum(getattr(r, f.name) for r in reports) / n
    total = reports[0].confusion
    for r in reports[1:]:
        total = total + r.confusion
    return ClassificationReport(
        **means,
        support_pos=sum(r.support_pos for r in reports),
        support_neg=sum(r.support_neg for r in reports),
        confusion=total,
        zero_division=any(r.zero_division for r in reports),
    )
