"""Batched submission of classification prompts to a chat-completion API.

Batches go out strictly one after another in dataset order, because the
recency analysis reads meaning into that order. Every reply is appended
to a JSON-lines cache keyed by model and prompt, so an interrupted run
resumes where it stopped and a warm rerun touches no network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .bias import PredictionTrace, TraceEntry
from .dataset import HABITUAL_BE, MULTIPLE_NEGATION, Record
from .metrics import ClassificationReport, score
from .prompts import OK, PromptSpec, build_prompt, parse_response_detailed

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
API_KEY_ENV = "AAETAG_API_KEY"


@dataclass(frozen=True)
class LLMConfig:
    endpoint: str = DEFAULT_ENDPOINT
    model: str = "gpt-4o-mini"
    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = 2048
    timeout: float = 60.0
    max_retries: int = 5
    backoff_base: float = 1.0
    batch_size: int = 100

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class ProviderError(RuntimeError):
    pass


class TransientProviderError(ProviderError):
    """Rate limits, 5xx and transport failures; worth retrying."""


class ChatClient(Protocol):
    def complete(self, prompt: str, config: LLMConfig) -> str: ...


class HTTPChatClient:
    """OpenAI-style ``/chat/completions`` over HTTPS with a bearer token.

    Works for any service speaking that wire format (OpenAI, or a local
    server fronting a Hugging Face model).
    """

    def __init__(self, api_key: str | None = None, session: requests.Session | None = None):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV) or os.environ.get("OPENAI_API_KEY")
        self.session = session or requests.Session()

    def request_body(self, prompt: str, config: LLMConfig) -> dict:
        return {
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
        }

    def complete(self, prompt: str, config: LLMConfig) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                config.endpoint, json=self.request_body(prompt, config),
                headers=headers, timeout=config.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}") from exc


_PROMPT_LINE = re.compile(
    r"^(\d+)\. Classify the sentence '(.*)' as '(.*)' or '(.*)' in one word", re.MULTILINE
)


def prompt_items(prompt: str) -> list[tuple[int, str, str, str]]:
    """(index, sentence, label_a, label_b) for each numbered query line."""
    return [(int(i), s, a, b) for i, s, a, b in _PROMPT_LINE.findall(prompt)]


def rule_classifier(feature: str) -> Callable[[str], int]:
    if feature == MULTIPLE_NEGATION:
        from .negation import tag_multiple_negation

        return tag_multiple_negation
    if feature == HABITUAL_BE:
        from .pos import tag_pos
        from .text import Sentence

        def habitual(text: str) -> int:
            s = Sentence.from_text(text)
            tags = tag_pos(s)
            for t in s.tokens:
                if t.lower == "be":
                    return int(t.index > 0 and tags[t.index - 1] in ("PRON", "NOUN"))
            return 0

        return habitual
    raise ValueError(f"no rule classifier for {feature!r}")


class MockChatClient:
    """Offline stand-in for a provider.

    Answers every numbered query line either from ``script`` (labels 0/1
    consumed in order across calls) or from ``classifier(sentence)``.
    ``flip_rate`` flips a deterministic, sentence-keyed fraction of answers
    so that reports are not trivially perfect. ``failures`` makes the
    first n calls raise a transient error.
    """

    def __init__(
        self,
        classifier: Callable[[str], int] | None = None,
        script: Sequence[int] | None = None,
        flip_rate: float = 0.0,
        seed: int = 0,
        failures: int = 0,
    ):
        if classifier is None and script is None:
            raise ValueError("mock needs a classifier or a script")
        self.classifier = classifier
        self.script = list(script) if script is not None else None
        self.flip_rate = flip_rate
        self.seed = seed
        self.failures = failures
        self.calls = 0
        self._cursor = 0

    def _flip(self, sentence: str) -> bool:
        if not self.flip_rate:
            return False
        h = hashlib.sha256(f"{self.seed}\x00{sentence}".encode()).digest()
        return int.from_bytes(h[:8], "big") / 2**64 < self.flip_rate

    def complete(self, prompt: str, config: LLMConfig) -> str:
        self.calls += 1
        if self.failures > 0:
            self.failures -= 1
            raise TransientProviderError("mock transient failure")
        lines = []
        for index, sentence, label_a, label_b in prompt_items(prompt):
            if self.script is not None:
                if self._cursor >= len(self.script):
                    raise ProviderError("mock script exhausted")
                value = int(self.script[self._cursor])
                self._cursor += 1
            else:
                value = int(self.classifier(sentence))
                if self._flip(sentence):
                    value = 1 - value
            lines.append(f"{index}. {label_a if value else label_b}")
        return "\n".join(lines)


class CacheCorruptError(RuntimeError):
    pass


def cache_key(model: str, prompt: str) -> str:
    return hashlib.sha256(json.dumps([model, prompt]).encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSON-lines cache: ``{key, request, response, timestamp}``.

    A final line without a newline is treated as a write still in
    progress and ignored; any other unreadable line is corruption.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, str] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        text = self.path.read_text(encoding="utf-8")
        lines = text.split("\n")
        complete, tail = lines[:-1], lines[-1]
        for lineno, line in enumerate(complete, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                self._entries[d["key"]] = d["response"]
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheCorruptError(f"{self.path}:{lineno}: {exc}") from None
        if tail.strip():
            log.warning("ignoring incomplete trailing cache line in %s", self.path)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, request: dict, response: str) -> None:
        self._entries[key] = response
        line = json.dumps(
            {"key": key, "request": request, "response": response, "timestamp": time.time()},
            sort_keys=True,
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())


@dataclass
class Transcript:
    batch_id: int
    record_ids: list[str]
    prompt: str
    response: str
    labels: list[int | None]
    status: list[str]
    cached: bool
    retries: int = 0
    started: float = 0.0
    finished: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    trace: PredictionTrace
    transcripts: list[Transcript]
    unparsed: list[str] = field(default_factory=list)
    network_calls: int = 0

    def report(self) -> ClassificationReport:
        return score([e.predicted for e in self.trace], [e.gold for e in self.trace])


class RunAborted(RuntimeError):
    """Retries ran out. Completed batches are in the cache; rerunning with
    the same cache resumes from ``completed_batches``."""

    def __init__(self, message: str, completed_batches: int, transcripts: list[Transcript]):
        super().__init__(message)
        self.completed_batches = completed_batches
        self.transcripts = transcripts


def call_with_retries(
    fn: Callable[[], str], max_retries: int, backoff_base: float,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[str, int]:
    """Run ``fn``; on TransientProviderError wait backoff_base * 2**attempt
    and try again, at most ``max_retries`` extra times."""
    attempt = 0
    while True:
        try:
            return fn(), attempt
        except TransientProviderError as exc:
            if attempt >= max_retries:
                raise
            delay = backoff_base * 2**attempt
            log.warning("transient provider error (%s); retry %d in %.1fs", exc, attempt + 1, delay)
            sleep(delay)
            attempt += 1


def run_batches(
    records: Sequence[Record],
    spec: PromptSpec,
    config: LLMConfig,
    client: ChatClient,
    *,
    feature: str,
    cache: ResponseCache | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> RunResult:
    """Classify ``records`` batch by batch, in order.

    Trace positions are dataset indices. Items whose reply could not be
    parsed are left out of the trace and listed in ``unparsed``.
    """
    records = list(records)
    for r in records:
        r.label(feature)  # gold labels are required for the trace
    entries: list[TraceEntry] = []
    transcripts: list[Transcript] = []
    unparsed: list[str] = []
    calls = 0
    bs = config.batch_size
    for b, start in enumerate(range(0, len(records), bs)):
        batch = records[start : start + bs]
        prompt = build_prompt([r.text for r in batch], spec)
        key = cache_key(config.model, prompt)
        t0 = time.time()
        cached = cache is not None and key in cache
        retries = 0
        if cached:
            raw = cache.get(key)
        else:
            def attempt() -> str:
                nonlocal calls
                calls += 1
                return client.complete(prompt, config)

            try:
                raw, retries = call_with_retries(attempt, config.max_retries, config.backoff_base, sleep)
            except ProviderError as exc:
                raise RunAborted(f"batch {b} failed: {exc}", b, transcripts) from exc
            if cache is not None:
                request = {"model": config.model, "prompt": prompt,
                           "temperature": config.temperature, "top_p": config.top_p}
                cache.put(key, request, raw)
        labels, status = parse_response_detailed(raw, len(batch), spec)
        for offset, (r, value, st) in enumerate(zip(batch, labels, status)):
            if st == OK:
                entries.append(TraceEntry(r.id, value, r.label(feature), b, start + offset))
            else:
                unparsed.append(r.id)
        transcripts.append(
            Transcript(b, [r.id for r in batch], prompt, raw, labels, status, cached, retries, t0, time.time())
        )
    if unparsed:
        log.warning("%d of %d items could not be parsed and are excluded", len(unparsed), len(records))
    return RunResult(PredictionTrace(tuple(entries)), transcripts, unparsed, calls)


def write_transcripts(transcripts: Sequence[Transcript], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in transcripts:
            fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
