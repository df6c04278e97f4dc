"""One test per acceptance criterion, each at its stated tolerance.

Each test records a one-line verdict that the session prints at the end
(see conftest.py). Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import time
import warnings

import numpy as np
import pytest

from aaetag import glm
from aaetag.bias import (
    PredictionTrace,
    recency_feature,
    run_formality_regression,
    run_recency_regression,
    simulate_formality_trace,
    simulate_recency_trace,
)
from aaetag.cli import main
from aaetag.dataset import HABITUAL_BE, MULTIPLE_NEGATION, Record
from aaetag.habitual import summarize_folds, train_habitual
from aaetag.metrics import ConfusionCounts, report_from_counts
from aaetag.negation import tag_multiple_negation
from aaetag.prompts import PromptSpec, build_few_shot_prompt, build_zero_shot_prompt, parse_response
from aaetag.synth import is_rule_consistent, shipped_corpus

import oracles
from conftest import ACCEPTANCE, GOLDEN
from test_prompts import FIXTURES


def verdict(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1 -------------------------------------------------------------------------

PINNED = [
    ("I ain't step on no dog.", 1),
    ("Because he ain't been back to finish yet.", 0),
    ("We was in Pentecost holiness and I wasn't allowed to smoke.", 0),
    ("I didn't ask you not to come", 1),  # documented false positive; gold is 0
    ("I am usually in my office by 7:30.", 0),
]


def test_criterion_1_golden_sentences():
    t0 = time.perf_counter()
    got = [tag_multiple_negation(s) for s, _ in PINNED]
    elapsed = time.perf_counter() - t0
    ok = got == [label for _, label in PINNED] and elapsed < 1.0
    verdict(1, ok, f"labels {got}, {elapsed * 1000:.1f} ms")


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_rule_oracle_equivalence():
    data = shipped_corpus(MULTIPLE_NEGATION)
    preds = {r.id: tag_multiple_negation(r.text) for r in data}
    mismatches = sum(preds[r.id] != oracles.multiple_negation(r.text) for r in data)
    consistent_pos = [r for r in data if is_rule_consistent(r) and r.label(MULTIPLE_NEGATION) == 1]
    recall = sum(preds[r.id] for r in consistent_pos) / len(consistent_pos)
    ok = len(data) == 1000 and mismatches == 0 and recall == 1.0
    verdict(2, ok, f"{len(data)} sentences, {mismatches} oracle mismatches, "
                   f"recall on {len(consistent_pos)} rule-consistent positives = {recall:.2f}")


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_metrics_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        c = [int(v) for v in rng.integers(0, 1000, 4)]
        if rng.random() < 0.1:  # exercise empty rows and columns too
            c[rng.integers(0, 4)] = 0
        if sum(c) == 0:
            c[0] = 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # zero-denominator cells are expected here
            r = report_from_counts(ConfusionCounts(*c))
        expected = oracles.direct_report(*c)
        for name in ("precision_pos", "precision_neg", "recall_pos", "recall_neg", "f1_weighted"):
            worst = max(worst, abs(getattr(r, name) - expected[name]))
    verdict(3, worst <= 1e-12, f"1000 confusion matrices, max abs deviation {worst:.2e}")


# -- 4 -------------------------------------------------------------------------

TRUE_BETA = np.array([-0.5, 1.0, -0.75])


def _fd_grad(f, beta, h=1e-6):
    out = np.zeros_like(beta)
    for j in range(len(beta)):
        e = np.zeros_like(beta)
        e[j] = h
        out[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return out


def test_criterion_4_glm():
    # recovery
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(5000), rng.normal(size=5000), rng.integers(0, 2, 5000)])
        y = (rng.random(5000) < glm.sigmoid(X @ TRUE_BETA)).astype(float)
        worst = max(worst, float(np.max(np.abs(glm.fit_logistic(X, y).coef - TRUE_BETA))))
    recovery_ok = worst <= 0.15

    # analytic gradient vs finite differences
    rng = np.random.default_rng(99)
    X = np.column_stack([np.ones(300), rng.normal(size=(300, 3))])
    y = rng.integers(0, 2, 300).astype(float)
    grad_rel = 0.0
    for _ in range(10):
        beta = rng.normal(size=4)
        g = glm.score(beta, X, y)
        fd = _fd_grad(lambda b: glm.loglik(b, X, y), beta)
        grad_rel = max(grad_rel, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8))))
    grad_ok = grad_rel <= 1e-5

    # null calibration
    rejections = 0
    for seed in range(1000):
        rng = np.random.default_rng(10_000 + seed)
        gold = rng.integers(0, 2, 200)
        noise = rng.normal(size=200)
        y = (rng.random(200) < glm.sigmoid(-1.0 + 2.0 * gold)).astype(float)
        fit = glm.fit_logistic(glm.DesignMatrix.from_columns({"null": noise, "ground": gold}), y)
        rejections += fit.pvalue_of("null") < 0.05
    rate = rejections / 1000
    null_ok = abs(rate - 0.05) <= 0.02

    # separation
    x = np.linspace(-2, 2, 40)
    try:
        glm.fit_logistic(glm.DesignMatrix.from_columns({"x": x}), (x > 0.1).astype(float))
        sep_ok = False
    except glm.SeparationError:
        sep_ok = True

    verdict(4, recovery_ok and grad_ok and null_ok and sep_ok,
            f"max |beta-truth| {worst:.3f} (<=0.15); grad rel err {grad_rel:.1e} (<=1e-5); "
            f"null p<0.05 rate {rate:.3f} (0.05±0.02); separation detected={sep_ok}")


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_recency_covariate():
    trace = PredictionTrace.from_predictions([1, 0, 1, 1, 0, 1], [0] * 6)
    cases = {
        (1, 0, 1, 1, 0, 1): [0.6],
        (0, 0, 0, 0, 0, 0, 0): [1.0, 1.0],
        (1, 1, 1, 1, 1, 0, 0): [0.0, 0.2],
        (0, 1, 0, 1, 0, 1, 0, 1): [0.4, 0.4, 0.4],
    }
    exact = recency_feature(trace) == [("s00005", 0.6)]
    for preds, expected in cases.items():
        got = [v for _, v in recency_feature(PredictionTrace.from_predictions(list(preds), [0] * len(preds)))]
        exact = exact and got == expected
    rng = np.random.default_rng(5)
    allowed = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}
    in_grid = True
    for _ in range(50):
        preds = rng.integers(0, 2, 200).tolist()
        values = recency_feature(PredictionTrace.from_predictions(preds, preds))
        in_grid = in_grid and {v for _, v in values} <= allowed
        in_grid = in_grid and [v for _, v in values] == list(oracles.recency_recount(preds).values())
    verdict(5, exact and in_grid, f"hand-computed cases exact={exact}; values on the 0.2 grid "
                                  f"and equal to recount={in_grid}")


# -- 6 -------------------------------------------------------------------------


def test_criterion_6_bias_detection_power():
    t0 = time.perf_counter()
    rec_hits = sum(
        (a := run_recency_regression(simulate_recency_trace(500, -4.0, seed=s))).coef < 0 and a.pvalue < 0.01
        for s in range(100)
    )
    rec_null = sum(run_recency_regression(simulate_recency_trace(500, 0.0, seed=s)).pvalue < 0.05
                   for s in range(100))
    form_hits = 0
    form_null = 0
    for s in range(100):
        a = run_formality_regression(*simulate_formality_trace(500, 1.0, seed=s))
        form_hits += a.coef > 0 and a.pvalue < 0.01
        form_null += run_formality_regression(*simulate_formality_trace(500, 0.0, seed=s)).pvalue < 0.05
    # supplementary: the predetermined share-of-positives covariate under the same null
    alt_null = sum(
        run_recency_regression(simulate_recency_trace(500, 0.0, seed=s), covariate="positive_share").pvalue < 0.05
        for s in range(100)
    )
    elapsed = time.perf_counter() - t0
    ok = rec_hits >= 95 and abs(rec_null - 5) <= 3 and form_hits >= 95 and abs(form_null - 5) <= 3
    verdict(6, ok,
            f"recency beta=-4: {rec_hits}/100 negative p<0.01 (>=95); recency beta=0: {rec_null}/100 "
            f"significant (5±3); formality beta=+1: {form_hits}/100 positive p<0.01 (>=95); formality "
            f"beta=0: {form_null}/100 significant (5±3); [positive_share covariate null: {alt_null}/100]; "
            f"{elapsed:.1f}s")


# -- 7 -------------------------------------------------------------------------


def test_criterion_7_prompt_goldens_and_parser():
    hab = PromptSpec.for_feature(HABITUAL_BE)
    zero = build_zero_shot_prompt(["I be happy.", "She be working late on Fridays.", "He said 'I'll be there.'"], hab)
    neg = PromptSpec.for_feature(
        MULTIPLE_NEGATION, "few_shot", [Record("e", "I ain't step on no dog.", {MULTIPLE_NEGATION: 1})]
    )
    few = build_few_shot_prompt(["Because he ain't been back to finish yet."], neg)
    zero_ok = zero.encode() == (GOLDEN / "zero_shot_habitual.txt").read_bytes()
    few_ok = few.encode() == (GOLDEN / "few_shot_negation.txt").read_bytes()
    parsed = sum(parse_response(raw, n, spec) == expected for raw, n, spec, expected in FIXTURES)
    longest = parse_response("1. non-habitual be", 1, hab) == [0]
    ok = zero_ok and few_ok and parsed == len(FIXTURES) == 20 and longest
    verdict(7, ok, f"zero-shot golden={zero_ok}, few-shot golden={few_ok}, "
                   f"{parsed}/{len(FIXTURES)} parser fixtures, 'non-habitual be' -> B: {longest}")


# -- 8 -------------------------------------------------------------------------


def test_criterion_8_end_to_end_mock(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["llm-run", "--feature", HABITUAL_BE, "--mock", "--batch-size", "100", "--out-dir", str(out)]
    first_code = main(args)
    trace_bytes = (out / "trace.jsonl").read_bytes()
    rows = trace_bytes.decode().splitlines()
    report = json.loads((out / "report.json").read_text())["report"]
    shaped = all(k in report for k in ("precision_pos", "precision_neg", "recall_pos", "recall_neg", "f1_weighted"))
    bias_code = main(["bias", "recency", "--trace", str(out / "trace.jsonl")])
    warm_code = main(args)
    warm = json.loads((out / "report.json").read_text())
    identical = (out / "trace.jsonl").read_bytes() == trace_bytes
    capsys.readouterr()
    ok = (first_code == 0 and len(rows) == 1000 and shaped and bias_code == 0 and warm_code == 0
          and warm["network_calls"] == 0 and identical)
    verdict(8, ok, f"trace rows {len(rows)}, report shape ok={shaped}, bias recency exit {bias_code}, "
                   f"warm-cache network calls {warm['network_calls']}, trace byte-identical={identical}")


# -- 9 -------------------------------------------------------------------------


def test_criterion_9_habitual_desk_scale():
    data = shipped_corpus(HABITUAL_BE)
    results = train_habitual(data, k=3, folds=10, seed=0)
    avg = summarize_folds(results)
    verdict(9, avg.f1_weighted >= 0.85,
            f"10-fold average held-out F1w {avg.f1_weighted:.3f} (>=0.85) on {len(data)} sentences")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
