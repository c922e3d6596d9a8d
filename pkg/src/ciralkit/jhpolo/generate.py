"""Chat-completion clients and the pair -> training example step."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import requests

from ..corpus import Collection, tokenize
from .mining import MinedPair
from .prompt import PROMPT_TEMPLATE, QUERIES_PER_DOC, ResponseParseError, build_prompt, parse_response

logger = logging.getLogger(__name__)

ENV_URL = "CIRAL_LLM_URL"
ENV_KEY = "CIRAL_LLM_KEY"
ENV_MODEL = "CIRAL_LLM_MODEL"


class TransportError(RuntimeError):
    """A chat request failed in a way worth retrying."""


class ChatClient(Protocol):
    def complete(self, prompt: str) -> str:
        """Send one user message; return the raw response body."""
        ...


class MockChatClient:
    """Replays canned bodies: a fixed string, a list consumed in order, or a callable."""

    def __init__(self, responses: str | Sequence[str | Exception] | Callable[[str], str]) -> None:
        self._responses = responses
        self._i = 0
        self._lock = threading.Lock()
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.prompts.append(prompt)
            if callable(self._responses):
                return self._responses(prompt)
            if isinstance(self._responses, str):
                return self._responses
            item = self._responses[min(self._i, len(self._responses) - 1)]
            self._i += 1
        if isinstance(item, Exception):
            raise item
        return item


def chat_body(content: str, model: str = "mock") -> str:
    """Wrap ``content`` in a minimal chat-completion response body."""
    return json.dumps({
        "id": "mock", "object": "chat.completion", "created": 0, "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {},
    })


def split_prompt(prompt: str) -> tuple[str, str]:
    """Recover the two document texts from a prompt made by :func:`build_prompt`."""
    head, _, rest = PROMPT_TEMPLATE.partition("{first}")
    middle, _, tail = rest.partition("{second}")
    if not (prompt.startswith(head) and prompt.endswith(tail)):
        raise ValueError("prompt does not follow the template")
    first, sep, second = prompt[len(head) : len(prompt) - len(tail)].partition(middle)
    if not sep:
        raise ValueError("prompt does not follow the template")
    return first, second


class ExtractiveMockClient:
    """Answers each prompt with queries built from words only one document contains.

    Offline stand-in that yields examples a lexical scorer can tell apart.
    """

    def __init__(self, words_per_query: int = 3) -> None:
        self.words_per_query = words_per_query

    def _queries(self, text: str, other: str) -> list[str]:
        words = list(dict.fromkeys(tokenize(text)))
        seen = set(tokenize(other))
        unique = [w for w in words if w not in seen] or words or ["empty"]
        n = self.words_per_query
        return [" ".join(unique[(i * n + j) % len(unique)] for j in range(n)) for i in range(QUERIES_PER_DOC)]

    def complete(self, prompt: str) -> str:
        a, b = split_prompt(prompt)
        lines = ["DOCA:"] + [f"{i}. {q}" for i, q in enumerate(self._queries(a, b), 1)]
        lines += ["", "DOCB:"] + [f"{i}. {q}" for i, q in enumerate(self._queries(b, a), 1)]
        return chat_body("\n".join(lines))


class RateLimiter:
    def __init__(self, per_second: float | None) -> None:
        self.interval = 1.0 / per_second if per_second else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            time.sleep(delay)


class HttpChatClient:
    """OpenAI-style ``/chat/completions`` endpoint."""

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        rate_limit: float | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.url = url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.limiter = RateLimiter(rate_limit)
        self.session = session or requests.Session()

    @classmethod
    def from_env(cls, **kwargs: Any) -> "HttpChatClient":
        url, model = os.environ.get(ENV_URL), os.environ.get(ENV_MODEL)
        if not url or not model:
            raise ValueError(f"{ENV_URL} and {ENV_MODEL} must be set")
        return cls(url, model, os.environ.get(ENV_KEY), **kwargs)

    def complete(self, prompt: str) -> str:
        self.limiter.wait()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        try:
            resp = self.session.post(self.url, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        resp.raise_for_status()
        return resp.text


@dataclass(frozen=True)
class GeneratedExample:
    query: str
    pos: str
    neg: str
    pair_id: str
    slot: str  # "DOCA" or "DOCB"

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError("query must be non-empty")
        if self.pos == self.neg:
            raise ValueError("positive and negative documents must differ")
        if self.slot not in ("DOCA", "DOCB"):
            raise ValueError(f"bad slot {self.slot!r}")


@dataclass
class GenerationResult:
    examples: list[GeneratedExample] = field(default_factory=list)
    failures: list[dict[str, Any]] = field(default_factory=list)
    raw: list[dict[str, Any]] = field(default_factory=list)


def call_with_retry(
    client: ChatClient,
    prompt: str,
    max_retries: int = 4,
    base_delay: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[str, int]:
    """Return (body, attempts); back off exponentially on :class:`TransportError`."""
    attempt = 0
    while True:
        attempt += 1
        try:
            return client.complete(prompt), attempt
        except TransportError as exc:
            if attempt > max_retries:
                raise TransportError(f"gave up after {attempt} attempts: {exc}") from exc
            delay = base_delay * 2 ** (attempt - 1)
            logger.warning("chat request failed (%s); retrying in %.1fs", exc, delay)
            sleep(delay)


def examples_from_queries(pair: MinedPair, doca: list[str], docb: list[str]) -> list[GeneratedExample]:
    out = [GeneratedExample(q, pair.doc_a, pair.doc_b, pair.pair_id, "DOCA") for q in doca]
    out += [GeneratedExample(q, pair.doc_b, pair.doc_a, pair.pair_id, "DOCB") for q in docb]
    return out


def _run_pair(client, pair, collection, max_retries, base_delay, sleep):
    raw: list[dict[str, Any]] = []
    prompt = build_prompt(collection.get(pair.doc_a), collection.get(pair.doc_b))
    try:
        body, attempts = call_with_retry(client, prompt, max_retries, base_delay, sleep)
    except (TransportError, requests.RequestException) as exc:
        return [], {"pair_id": pair.pair_id, "stage": "transport", "error": str(exc)}, raw
    raw.append({"pair_id": pair.pair_id, "attempts": attempts, "body": body})
    try:
        doca, docb = parse_response(body)
    except ResponseParseError as exc:
        logger.warning("pair %s: %s", pair.pair_id, exc)
        return [], {"pair_id": pair.pair_id, "stage": "parse", "error": str(exc)}, raw
    return examples_from_queries(pair, doca, docb), None, raw


def generate_examples(
    client: ChatClient,
    pairs: Sequence[MinedPair],
    collection: Collection,
    max_retries: int = 4,
    base_delay: float = 1.0,
    concurrency: int = 1,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationResult:
    """Prompt once per pair; DOCA queries make ``doc_a`` the positive, DOCB the reverse.

    Requests may run concurrently, but results are assembled in pair order.
    Transport and parse failures are recorded and the pair is skipped.
    """
    def job(pair: MinedPair):
        return _run_pair(client, pair, collection, max_retries, base_delay, sleep)

    if concurrency > 1:
        with ThreadPoolExecutor(concurrency) as ex:
            outcomes = list(ex.map(job, pairs))
    else:
        outcomes = [job(p) for p in pairs]

    result = GenerationResult()
    for examples, failure, raw in outcomes:
        result.examples.extend(examples)
        result.raw.extend(raw)
        if failure:
            result.failures.append(failure)
    return result


def write_jsonl(records: Iterable[Any], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            if not isinstance(rec, dict):
                rec = asdict(rec)
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_examples(path: str | Path) -> list[GeneratedExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(GeneratedExample(rec["query"], rec["pos"], rec["neg"], rec["pair_id"], rec["slot"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed example ({exc})") from exc
    return out
