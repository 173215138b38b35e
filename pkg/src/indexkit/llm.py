"""Client for an OpenAI-compatible chat endpoint plus the three LLM
pipelines: record translation, synthetic-record generation and candidate
ranking, and the quality/efficiency model score.

Wire protocol: POST <base>/v1/chat/completions with fields `model`,
`messages`, `temperature`, `max_tokens`; the completion is read from
`choices[0].message.content`.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import requests

from . import prompts
from .datamodel import Record, SubjectVocabulary

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")

MAX_RETRIES = 3


class TransportError(RuntimeError):
    """Endpoint unreachable, timed out, or kept failing after retries."""


class ProtocolError(RuntimeError):
    """Endpoint answered, but not with the expected response shape."""


@dataclass(frozen=True)
class LlmEndpoint:
    base_url: str
    model: str
    timeout: float = 60.0
    parallel: int = 4
    temperature: float = 0.0
    max_tokens: int = 2048
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.parallel < 1:
            raise ValueError("parallelism must be >= 1")


class Telemetry:
    """Thread-safe counters for one pipeline run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.requests = 0
        self.retries = 0
        self.parse_failures = 0
        self.failures = 0

    def count(self, name: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + amount)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "requests": self.requests,
                "retries": self.retries,
                "parse_failures": self.parse_failures,
                "failures": self.failures,
            }

    def write(self, path: str | Path, throughput: float | None = None) -> None:
        payload: dict = self.snapshot()
        if throughput is not None:
            payload["throughput"] = throughput
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def chat(
    endpoint: LlmEndpoint,
    system: str,
    user: str,
    telemetry: Telemetry | None = None,
) -> str:
    """Single chat completion, retried up to 3 times with exponential
    backoff on transport errors and 5xx responses."""
    body = {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    }
    url = endpoint.base_url.rstrip("/") + "/v1/chat/completions"
    last_error: Exception | None = None
    for attempt in range(MAX_RETRIES + 1):
        if attempt:
            if telemetry:
                telemetry.count("retries")
            time.sleep(endpoint.backoff_base * 2 ** (attempt - 1))
        if telemetry:
            telemetry.count("requests")
        try:
            response = requests.post(url, json=body, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code >= 500:
            last_error = TransportError(f"{url}: server error {response.status_code}")
            continue
        if response.status_code != 200:
            raise ProtocolError(f"{url}: unexpected status {response.status_code}")
        try:
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"{url}: malformed completion response: {exc}") from exc
    raise TransportError(f"{url}: giving up after {MAX_RETRIES} retries: {last_error}")


def _split_completion(text: str) -> tuple[str, str]:
    """First non-empty line is the title, the remainder the abstract."""
    lines = text.strip().splitlines()
    if not lines:
        return "", ""
    title = lines[0].strip()
    abstract = "\n".join(lines[1:]).strip()
    return title, abstract


def translate_record(
    endpoint: LlmEndpoint,
    record: Record,
    target: str,
    telemetry: Telemetry | None = None,
) -> Record:
    """Translate a record's title and abstract into the target language.

    An empty completion passes the record through untranslated with a
    warning; gold subjects are copied unchanged either way.
    """
    system, user = prompts.render_translate(target, record.title, record.abstract)
    completion = chat(endpoint, system, user, telemetry)
    title, abstract = _split_completion(completion)
    if not title:
        logger.warning("record %s: empty translation, passing through untranslated", record.id)
        if telemetry:
            telemetry.count("failures")
        return record
    return Record(
        id=record.id,
        title=title,
        abstract=abstract,
        language=target,
        subjects=record.subjects,
    )


@dataclass(frozen=True)
class SyntheticRecord(Record):
    generator_model: str = ""
    source_record_id: str = ""
    added_subject_id: str = ""


def synthesize_record(
    endpoint: LlmEndpoint,
    source: Record,
    vocabulary: SubjectVocabulary,
    eligible: set[str],
    seed: int,
    telemetry: Telemetry | None = None,
) -> SyntheticRecord | None:
    """Generate one synthetic record: same subjects as the source plus one
    subject drawn uniformly from `eligible` under the given seed.

    Returns None (with a warning) if the model produced an empty
    completion twice.
    """
    choices = sorted(eligible - source.subjects)
    if not choices:
        raise ValueError(f"record {source.id}: no eligible subjects to add")
    added = random.Random(seed).choice(choices)

    old_keywords = [vocabulary.lookup(sid).label(source.language) for sid in sorted(source.subjects)]
    new_keywords = old_keywords + [vocabulary.lookup(added).label(source.language)]
    title_desc = f"{source.title}\n\n{source.abstract}".strip()
    system, user = prompts.render_synthesize(
        source.language, old_keywords, title_desc, new_keywords
    )

    title = abstract = ""
    for _ in range(2):
        completion = chat(endpoint, system, user, telemetry)
        title, abstract = _split_completion(completion)
        if title:
            break
    if not title:
        logger.warning("record %s: empty synthesis completion twice, skipping", source.id)
        if telemetry:
            telemetry.count("failures")
        return None
    return SyntheticRecord(
        id=f"{source.id}#syn",
        title=title,
        abstract=abstract,
        language=source.language,
        subjects=frozenset(source.subjects | {added}),
        generator_model=endpoint.model,
        source_record_id=source.id,
        added_subject_id=added,
    )


def extract_json_object(text: str) -> dict | None:
    """Pull the outermost balanced JSON object out of a completion that
    may wrap it in prose or code fences."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start : i + 1])
                        if isinstance(obj, dict):
                            return obj
                    except json.JSONDecodeError:
                        break
                    break
        start = text.find("{", start + 1)
    return None


def rank_candidates(
    endpoint: LlmEndpoint,
    text: str,
    candidates: Sequence[tuple[str, str]],
    k: int = 100,
    telemetry: Telemetry | None = None,
) -> tuple[dict[str, float], bool]:
    """Ask the LLM to score candidate (subject id, label) pairs against a
    document text.

    Returns (subject id -> relevance in [0, 1], parse_failed). Scores are
    clamped to [0, 100] then rescaled; candidates missing from the reply
    get 0. Reply keys are matched case-insensitively after whitespace
    trim. An unparseable reply is retried once, then scored all-zero with
    the parse-failure flag set.
    """
    if len(candidates) > k:
        raise ValueError(f"{len(candidates)} candidates exceed the window of {k}")
    labels = [label for _, label in candidates]
    system, user = prompts.render_rank(text, labels)

    reply: dict | None = None
    for _ in range(2):
        completion = chat(endpoint, system, user, telemetry)
        reply = extract_json_object(completion)
        if reply is not None:
            break
    if reply is None:
        if telemetry:
            telemetry.count("parse_failures")
        return {sid: 0.0 for sid, _ in candidates}, True

    by_key = {}
    for key, value in reply.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            continue
        by_key[str(key).strip().lower()] = float(value)
    scores = {}
    for sid, label in candidates:
        raw = by_key.get(label.strip().lower(), 0.0)
        scores[sid] = min(100.0, max(0.0, raw)) / 100.0
    return scores, False


def map_parallel(
    items: Iterable[T],
    fn: Callable[[T], U],
    parallel: int,
) -> list[U]:
    """Apply fn over items with bounded parallelism; results come back in
    input order regardless of completion order."""
    items = list(items)
    if parallel <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(fn, items))


def measure_throughput(completed: int, elapsed_seconds: float) -> float:
    """Records per second; failed records count in time but not volume."""
    if elapsed_seconds <= 0:
        raise ValueError("elapsed time must be positive")
    return completed / elapsed_seconds


@dataclass(frozen=True)
class ModelScore:
    """Quality/efficiency selection score for one candidate model."""

    model: str
    ndcg: float
    throughput: float
    alpha: float = 0.003
    score: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "score", score_model(self.ndcg, self.throughput, self.alpha))


def score_model(ndcg: float, throughput: float, alpha: float = 0.003) -> float:
    """score = ndcg + alpha * throughput."""
    if not 0.0 <= ndcg <= 1.0:
        raise ValueError("ndcg must be in [0, 1]")
    if throughput < 0:
        raise ValueError("throughput must be non-negative")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return ndcg + alpha * throughput


def best_model(scores: Sequence[ModelScore]) -> ModelScore:
    """Argmax by score; ties broken by model id for determinism."""
    if not scores:
        raise ValueError("no model scores given")
    return max(scores, key=lambda m: (m.score, m.model))
