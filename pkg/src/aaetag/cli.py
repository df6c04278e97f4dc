"""Command-line entry point: ``aaetag <subcommand> ...``.

Exit codes: 0 success, 1 analysis failure (non-convergence, separation,
provider gave up), 2 usage or input error. Every run that writes files
also writes one ``manifest.json``-style record next to them.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import random
import subprocess
import sys
import time
from importlib import metadata
from pathlib import Path

from . import glm
from .bias import (
    COVARIATES,
    PATTERNS,
    BiasInputError,
    OrderingPlan,
    PredictionTrace,
    build_ordering_runs,
    render_table,
    run_formality_regression,
    run_recency_regression,
)
from .dataset import (
    FEATURES,
    HABITUAL_BE,
    MULTIPLE_NEGATION,
    Dataset,
    DatasetError,
    augment_habitual,
    load_dataset,
    load_substitution_lexicon,
    load_templates,
    write_tsv,
)
from .habitual import (
    BeCountError,
    HabitualTrainingError,
    fit_habitual,
    summarize_folds,
    train_habitual,
)
from .harness import (
    CacheCorruptError,
    HTTPChatClient,
    LLMConfig,
    MockChatClient,
    ProviderError,
    ResponseCache,
    RunAborted,
    rule_classifier,
    run_batches,
    write_transcripts,
)
from .metrics import score
from .negation import default_lexicon, load_lexicon, tag_multiple_negation
from .prompts import FEW_SHOT, ZERO_SHOT, PromptSpec
from .synth import shipped_corpus
from .text import default_boundary_config, load_boundary_config

log = logging.getLogger("aaetag")

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2

PROVIDERS = {
    "openai": ("https://api.openai.com/v1/chat/completions", "gpt-4o-mini"),
    "huggingface": ("https://router.huggingface.co/v1/chat/completions", "meta-llama/Meta-Llama-3-8B-Instruct"),
}

USAGE_ERRORS = (
    DatasetError, BiasInputError, BeCountError, CacheCorruptError,
    FileNotFoundError, IsADirectoryError, json.JSONDecodeError, KeyError, ValueError,
)
ANALYSIS_ERRORS = (glm.GLMError, HabitualTrainingError, RunAborted, ProviderError)


class UsageError(Exception):
    pass


def version_string() -> str:
    try:
        version = metadata.version("aaetag")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{version}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


class Run:
    """Collects what the manifest needs while a subcommand executes."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.started = time.time()
        self.timings: dict[str, float] = {}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.config: dict = {}

    def timed(self, name: str, t0: float) -> None:
        self.timings[name] = round(time.time() - t0, 6)

    def manifest(self) -> dict:
        cfg = {k: v for k, v in vars(self.args).items() if k not in ("func", "output_format")}
        cfg.update(self.config)
        return {
            "subcommand": self.args.command + (f" {self.args.analysis}" if hasattr(self.args, "analysis") else ""),
            "config": cfg,
            "seeds": {"seed": getattr(self.args, "seed", None)},
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": version_string(),
            "timings": {"total": round(time.time() - self.started, 6), **self.timings},
        }

    def write_manifest(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True, default=str) + "\n", "utf-8")


def _manifest_beside(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def emit(args: argparse.Namespace, text: str, payload) -> None:
    if args.output_format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text)


def _load_input(path: str | None, feature: str | None) -> Dataset:
    if path in (None, "shipped"):
        if feature is None:
            raise UsageError("--input is required")
        return shipped_corpus(feature)
    return load_dataset(path, FEATURES)


# -- tag-negation ---------------------------------------------------------------


def cmd_tag_negation(args, run: Run) -> int:
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    boundaries = load_boundary_config(args.boundaries) if args.boundaries else default_boundary_config()
    data = load_dataset(args.input, FEATURES)
    run.inputs["input"] = args.input
    t0 = time.time()
    preds = [tag_multiple_negation(r.text, lexicon, boundaries) for r in data]
    run.timed("tagging", t0)
    has_gold = bool(len(data)) and all(MULTIPLE_NEGATION in r.labels for r in data)
    report = score(preds, data.labels(MULTIPLE_NEGATION)) if has_gold else None

    rows = [
        {"id": r.id, "text": r.text, "predicted": p, **({"gold": r.label(MULTIPLE_NEGATION)} if has_gold else {})}
        for r, p in zip(data, preds)
    ]
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            if rows:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter="\t", lineterminator="\n",
                                        quoting=csv.QUOTE_NONE, escapechar="\\")
                writer.writeheader()
                writer.writerows(rows)
        run.outputs["predictions"] = str(out)
        run.write_manifest(_manifest_beside(out))
    lines = [] if args.output else [f"{r['id']}\t{r['predicted']}" for r in rows]
    if report is not None:
        lines.append(report.render("multiple negation (rule tagger)"))
    payload = {"n": len(rows), "report": report.to_dict() if report else None}
    if not args.output:
        payload["predictions"] = rows
    emit(args, "\n".join(lines), payload)
    return EXIT_OK


# -- train-habitual ---------------------------------------------------------------


def cmd_train_habitual(args, run: Run) -> int:
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    data = _load_input(args.input, HABITUAL_BE)
    run.inputs["input"] = args.input or "shipped"
    t0 = time.time()
    results = train_habitual(
        data, args.k, args.folds, args.seed,
        augmented_in_test=not args.exclude_augmented_from_test, l2=args.l2,
    )
    run.timed("cross_validation", t0)
    avg = summarize_folds(results)
    lines = [r.report.render(f"fold {r.fold} (train {r.n_train}, test {r.n_test})") for r in results]
    lines.append(avg.render(f"average over {args.folds} folds"))
    payload = {
        "folds": [{"fold": r.fold, "n_train": r.n_train, "n_test": r.n_test, "report": r.report.to_dict()}
                  for r in results],
        "average": avg.to_dict(),
    }
    manifest_at = None
    if args.model_out:
        t0 = time.time()
        model = fit_habitual(list(data), args.k, l2=args.l2)
        run.timed("final_fit", t0)
        out = Path(args.model_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        model.save(out)
        run.outputs["model"] = str(out)
        manifest_at = _manifest_beside(out)
    if args.report_out:
        out = Path(args.report_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
        run.outputs["report"] = str(out)
        manifest_at = manifest_at or _manifest_beside(out)
    if manifest_at:
        run.write_manifest(manifest_at)
    emit(args, "\n\n".join(lines), payload)
    return EXIT_OK


# -- llm-run --------------------------------------------------------------------


def _llm_config(args) -> LLMConfig:
    endpoint, model = PROVIDERS[args.provider]
    return LLMConfig(
        endpoint=args.endpoint or endpoint,
        model=args.model or model,
        temperature=args.temperature,
        top_p=args.top_p,
        max_tokens=args.max_tokens,
        max_retries=args.max_retries,
        batch_size=args.batch_size,
    )


def _client(args, feature: str):
    if args.mock_script:
        script = [int(x) for x in Path(args.mock_script).read_text("utf-8").split()]
        return MockChatClient(script=script)
    if args.mock:
        return MockChatClient(rule_classifier(feature), flip_rate=args.mock_flip_rate, seed=args.seed)
    return HTTPChatClient()


def _few_shot_examples(args, data: Dataset, feature: str):
    """(examples, remaining queries). Examples come from --examples when
    given, otherwise ``--shots`` per class are drawn from the input and
    withheld from the queries."""
    if args.examples:
        ex = list(load_dataset(args.examples, FEATURES))
        return ex, list(data)
    rng = random.Random(args.seed)
    chosen = []
    for label in (1, 0):
        pool = [r for r in data if r.label(feature) == label]
        if len(pool) < args.shots:
            raise UsageError(f"need {args.shots} examples with label {label}, input has {len(pool)}")
        chosen.extend(rng.sample(pool, args.shots))
    rng.shuffle(chosen)
    taken = {r.id for r in chosen}
    return chosen, [r for r in data if r.id not in taken]


def cmd_llm_run(args, run: Run) -> int:
    feature = args.feature
    data = _load_input(args.input, feature)
    run.inputs["input"] = args.input or "shipped"
    config = _llm_config(args)
    run.config["llm"] = {k: getattr(config, k) for k in config.__dataclass_fields__}
    if args.mode == "few":
        examples, queries = _few_shot_examples(args, data, feature)
        spec = PromptSpec.for_feature(feature, FEW_SHOT, examples)
    else:
        queries = list(data)
        spec = PromptSpec.for_feature(feature, ZERO_SHOT)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = ResponseCache(args.cache or out_dir / "cache.jsonl")
    run.outputs["cache"] = str(cache.path)
    client = _client(args, feature)
    t0 = time.time()
    try:
        result = run_batches(queries, spec, config, client, feature=feature, cache=cache)
    except RunAborted as exc:
        write_transcripts(exc.transcripts, out_dir / "transcripts.jsonl")
        run.config["aborted_after_batches"] = exc.completed_batches
        run.write_manifest(out_dir / "manifest.json")
        raise
    run.timed("llm", t0)
    result.trace.save(out_dir / "trace.jsonl")
    write_transcripts(result.transcripts, out_dir / "transcripts.jsonl")
    labels = ", ".join(f"{v}={spec.label_name(v)}" for v in (1, 0))
    report = result.report() if len(result.trace) else None
    summary = {
        "feature": feature,
        "mode": spec.mode,
        "model": config.model,
        "n_queries": len(queries),
        "n_traced": len(result.trace),
        "n_unparsed": len(result.unparsed),
        "unparsed_ids": result.unparsed,
        "network_calls": result.network_calls,
        "batches": len(result.transcripts),
        "report": report.to_dict() if report else None,
    }
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", "utf-8")
    run.outputs.update(
        trace=str(out_dir / "trace.jsonl"),
        transcripts=str(out_dir / "transcripts.jsonl"),
        report=str(out_dir / "report.json"),
    )
    run.config["network_calls"] = result.network_calls
    run.write_manifest(out_dir / "manifest.json")
    text = [
        f"{config.model} {spec.mode} on {feature} ({labels})",
        f"traced {len(result.trace)}/{len(queries)}; unparsed {len(result.unparsed)}; "
        f"network calls {result.network_calls}",
    ]
    if report:
        text.append(report.render())
    emit(args, "\n".join(text), summary)
    return EXIT_OK


# -- bias -----------------------------------------------------------------------


def _read_flags(path: str) -> dict[str, int]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        if not reader.fieldnames or "id" not in reader.fieldnames or "formality" not in reader.fieldnames:
            raise UsageError(f"{path}: flags file needs 'id' and 'formality' columns")
        flags = {}
        for rowno, row in enumerate(reader, 2):
            cell = (row["formality"] or "").strip()
            if cell == "":
                continue
            if cell not in ("0", "1"):
                raise UsageError(f"{path}: row {rowno}: formality must be 0 or 1, got {cell!r}")
            flags[row["id"]] = int(cell)
    return flags


def _column_names(paths: list[str]) -> list[str]:
    names = [Path(p).parent.name if Path(p).stem == "trace" else Path(p).stem for p in paths]
    return names if len(set(names)) == len(names) else [f"trace{i + 1}" for i in range(len(paths))]


def _write_json_output(args, run: Run, payload) -> None:
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", "utf-8")
        run.outputs["summary"] = str(out)
        run.write_manifest(_manifest_beside(out))


def cmd_bias(args, run: Run) -> int:
    if args.analysis == "ordering":
        return cmd_bias_ordering(args, run)
    if not args.trace:
        raise UsageError("--trace is required")
    analyses = {}
    for name, path in zip(_column_names(args.trace), args.trace):
        run.inputs[name] = path
        trace = PredictionTrace.load(path)
        if args.analysis == "recency":
            analyses[name] = run_recency_regression(
                trace, args.window, args.reset_per_batch, covariate=args.covariate
            )
        else:
            if not args.flags:
                ids = ", ".join(e.record_id for e in list(trace)[:20])
                raise UsageError(f"formality analysis needs --flags; missing flags for: {ids}")
            analyses[name] = run_formality_regression(trace, _read_flags(args.flags))
    text = render_table(analyses)
    if args.analysis == "recency":
        corr = "  ".join(f"{n}: {a.covariate_gold_corr:.3f}" for n, a in analyses.items())
        text += f"\n\ncorr(recency covariate, gold)  {corr}"
    text += "\n" + "  ".join(f"{n}: n={a.n_rows} dropped={a.n_dropped}" for n, a in analyses.items())
    payload = {name: a.to_dict() for name, a in analyses.items()}
    _write_json_output(args, run, payload)
    emit(args, text, payload)
    return EXIT_OK


def cmd_bias_ordering(args, run: Run) -> int:
    feature = args.feature
    probes = list(load_dataset(args.probes, FEATURES)) if args.probes else None
    if probes is None:
        raise UsageError("ordering needs --probes (10 sentences, 5 per gold label)")
    run.inputs["probes"] = args.probes
    plans = [
        OrderingPlan(pattern, size, args.repetitions, tuple(args.seed + i for i in range(args.repetitions)))
        for size in args.batch_sizes
        for pattern in args.patterns
    ]
    runs = [r for plan in plans for r in build_ordering_runs(probes, plan, feature)]
    execute = args.mock or args.provider_run
    rows = []
    cache = ResponseCache(args.cache) if (execute and args.cache) else None
    for r in runs:
        row = {**r.to_dict(feature)}
        if execute:
            spec = PromptSpec.for_feature(feature, FEW_SHOT, r.examples)
            config = _llm_config(args)
            config = LLMConfig(**{**{k: getattr(config, k) for k in config.__dataclass_fields__},
                                  "batch_size": r.batch_size})
            client = (MockChatClient(rule_classifier(feature), flip_rate=args.mock_flip_rate, seed=args.seed)
                      if args.mock else HTTPChatClient())
            result = run_batches(r.batch, spec, config, client, feature=feature, cache=cache)
            preds = result.trace.predictions
            golds = [e.gold for e in result.trace]
            row["predicted"] = preds
            row["accuracy"] = sum(p == g for p, g in zip(preds, golds)) / len(golds) if golds else None
            row["positive_rate"] = sum(preds) / len(preds) if preds else None
        rows.append(row)
    lines = [f"{len(runs)} runs ({len(plans)} configurations x {args.repetitions} repetitions)"]
    if execute:
        lines.append(f"{'pattern':<18}{'batch':>6}{'mean acc':>10}{'pos rate':>10}")
        for plan in plans:
            sel = [x for x in rows if x["pattern"] == plan.pattern and x["batch_size"] == plan.batch_size]
            acc = [x["accuracy"] for x in sel if x["accuracy"] is not None]
            pos = [x["positive_rate"] for x in sel if x["positive_rate"] is not None]
            lines.append(
                f"{plan.pattern:<18}{plan.batch_size:>6}"
                f"{sum(acc) / len(acc) if acc else float('nan'):>10.3f}"
                f"{sum(pos) / len(pos) if pos else float('nan'):>10.3f}"
            )
    else:
        for plan in plans:
            lines.append(f"  {plan.pattern} batch={plan.batch_size}: gold "
                         + "".join(map(str, build_ordering_runs(probes, plan, feature)[0].gold_sequence(feature))))
    payload = {"runs": rows}
    _write_json_output(args, run, payload)
    emit(args, "\n".join(lines), payload)
    return EXIT_OK


# -- augment --------------------------------------------------------------------


def cmd_augment(args, run: Run) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    seeds = list(load_dataset(args.input, FEATURES)) if args.input else []
    run.inputs["input"] = args.input
    templates = load_templates(args.templates) if args.templates else None
    if templates is None and not seeds:
        raise UsageError("augment needs --input seed sentences or --templates")
    lexicon = load_substitution_lexicon(args.lexicon) if args.lexicon else None
    if args.count and templates is None:
        seeds = [r for r in seeds if HABITUAL_BE in r.labels]
        if not seeds:
            raise UsageError("seed sentences carry no habitual_be labels")
    records = augment_habitual(seeds, args.count, templates, lexicon, args.seed, id_prefix=args.id_prefix)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if records:
        write_tsv(records, out)
    else:
        out.write_text("", "utf-8")
    run.outputs["augmented"] = str(out)
    run.write_manifest(_manifest_beside(out))
    pos = sum(r.label(HABITUAL_BE) for r in records)
    emit(args, f"wrote {len(records)} sentences ({pos} habitual, {len(records) - pos} not) to {out}",
         {"n": len(records), "positive": pos, "output": str(out)})
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _add_llm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=sorted(PROVIDERS), default="openai")
    p.add_argument("--endpoint", help="override the provider's chat-completions URL")
    p.add_argument("--model", help="override the provider's default model")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument("--max-tokens", type=int, default=2048)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--cache", help="JSON-lines response cache")
    p.add_argument("--mock", action="store_true", help="answer offline with the rule-based mock provider")
    p.add_argument("--mock-flip-rate", type=float, default=0.1,
                   help="fraction of mock answers flipped, keyed on the sentence")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-format", choices=("text", "json"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aaetag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {version_string()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tag-negation", parents=[common], help="rule-based Multiple Negation tagging")
    p.add_argument("--input", required=True, help="TSV with id, text and optional gold columns")
    p.add_argument("--lexicon", help="negator lexicon JSON")
    p.add_argument("--boundaries", help="clause boundary JSON")
    p.add_argument("--output", help="TSV of predictions (default: stdout)")
    p.set_defaults(func=cmd_tag_negation)

    p = sub.add_parser("train-habitual", parents=[common], help="k-fold Habitual Be classifier training")
    p.add_argument("--input", help="labeled TSV (default: shipped synthetic corpus)")
    p.add_argument("--k", type=int, default=3, help="context window either side of 'be'")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--exclude-augmented-from-test", action="store_true")
    p.add_argument("--model-out", help="write a model fitted on all input rows")
    p.add_argument("--report-out", help="write per-fold and averaged reports as JSON")
    p.set_defaults(func=cmd_train_habitual)

    p = sub.add_parser("llm-run", parents=[common], help="batched zero-/few-shot LLM annotation")
    p.add_argument("--input", help="labeled TSV (default: shipped synthetic corpus for --feature)")
    p.add_argument("--feature", choices=FEATURES, required=True)
    p.add_argument("--mode", choices=("zero", "few"), default="zero")
    p.add_argument("--shots", type=int, default=5, help="few-shot examples per class")
    p.add_argument("--examples", help="TSV of few-shot examples (default: drawn from --input)")
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mock-script", help="file of whitespace-separated 0/1 answers for the mock")
    p.add_argument("--out-dir", required=True)
    _add_llm_flags(p)
    p.set_defaults(func=cmd_llm_run)

    p = sub.add_parser("bias", parents=[common], help="recency, formality and ordering analyses")
    p.add_argument("analysis", choices=("recency", "formality", "ordering"))
    p.add_argument("--trace", nargs="+", help="trace JSON-lines file(s); one table column each")
    p.add_argument("--flags", help="TSV with id and formality columns")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--reset-per-batch", action="store_true")
    p.add_argument("--covariate", choices=sorted(COVARIATES), default="match")
    p.add_argument("--output", help="write the JSON summary here")
    p.add_argument("--probes", help="ordering: TSV of 10 probes, 5 per gold label")
    p.add_argument("--feature", choices=FEATURES, default=HABITUAL_BE)
    p.add_argument("--patterns", nargs="+", choices=PATTERNS, default=["ones_then_zeros", "zeros_then_ones"])
    p.add_argument("--batch-sizes", nargs="+", type=int, default=[10, 30])
    p.add_argument("--repetitions", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--provider-run", action="store_true", help="ordering: send the runs to the provider")
    p.add_argument("--batch-size", type=int, default=100, help=argparse.SUPPRESS)
    _add_llm_flags(p)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("augment", parents=[common], help="template-substitution Habitual Be augmentation")
    p.add_argument("--input", help="seed TSV with habitual_be labels")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--templates", help="template JSON (default: derive skeletons from --input)")
    p.add_argument("--lexicon", help="substitution lexicon JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id-prefix", default="aug")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_augment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    run = Run(args)
    try:
        return args.func(args, run)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aaetag {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ANALYSIS_ERRORS as exc:
        print(f"aaetag {args.command}: analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except USAGE_ERRORS as exc:
        print(f"aaetag {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
