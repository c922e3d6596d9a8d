"""Quality control for generated examples: banned words and a score margin."""

from __future__ import annotations

import hashlib
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import requests

from ..corpus import Collection, tokenize
from .generate import GeneratedExample

BANNED_WORDS = frozenset({"articles", "reports", "speaker", "these"})
# absorbs float error in differences such as 0.65 - 0.50
_MARGIN_SLACK = 1e-12


@dataclass(frozen=True)
class QcParams:
    banned_words: frozenset[str] = BANNED_WORDS
    margin: float = 0.15

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        object.__setattr__(self, "banned_words", frozenset(w.lower() for w in self.banned_words))


class RelevanceScorer(Protocol):
    def score(self, query: str, doc: str) -> float:
        """Relevance in [0, 1]."""
        ...


def qc_banned(query: str, qc: QcParams | None = None) -> bool:
    """True to keep: no banned word occurs as a whole token."""
    qc = qc or QcParams()
    return not (set(tokenize(query)) & qc.banned_words)


def qc_margin(
    scorer: RelevanceScorer, query: str, pos_doc: str, neg_doc: str, qc: QcParams | None = None
) -> bool:
    """True to keep: the positive outscores the negative by at least the margin."""
    qc = qc or QcParams()
    return margin_ok(scorer.score(query, pos_doc), scorer.score(query, neg_doc), qc)


def margin_ok(pos_score: float, neg_score: float, qc: QcParams | None = None) -> bool:
    qc = qc or QcParams()
    return pos_score - neg_score >= qc.margin - _MARGIN_SLACK


def _check_score(value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"scorer returned {value}, outside [0, 1]")
    return value


class StubScorer:
    """Deterministic stand-in: query-term coverage of the document plus a small hash jitter."""

    def __init__(self, jitter: float = 0.05) -> None:
        self.jitter = jitter

    def score(self, query: str, doc: str) -> float:
        q = set(tokenize(query))
        if not q:
            return 0.0
        coverage = len(q & set(tokenize(doc))) / len(q)
        h = hashlib.blake2b(f"{query}\x1f{doc}".encode("utf-8"), digest_size=8).digest()
        noise = int.from_bytes(h, "little") / 2**64
        return (1.0 - self.jitter) * coverage + self.jitter * noise


def _line(query: str, doc: str) -> str:
    return " ".join(query.split()) + "\t" + " ".join(doc.split())


class SubprocessScorer:
    """Long-lived child process speaking ``query<TAB>doc`` -> score, one line each."""

    def __init__(self, command: Sequence[str]) -> None:
        self.command = list(command)
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lock = threading.Lock()

    def score(self, query: str, doc: str) -> float:
        with self._lock:
            assert self._proc.stdin and self._proc.stdout
            self._proc.stdin.write(_line(query, doc) + "\n")
            self._proc.stdin.flush()
            reply = self._proc.stdout.readline()
        if not reply:
            raise RuntimeError(f"scorer process {self.command[0]!r} closed its output")
        return _check_score(float(reply))

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)

    def __enter__(self) -> "SubprocessScorer":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


class HttpScorer:
    """POSTs the ``query<TAB>doc`` line as the request body; expects a bare decimal back."""

    def __init__(self, url: str, timeout: float = 30.0, session: requests.Session | None = None) -> None:
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()

    def score(self, query: str, doc: str) -> float:
        resp = self.session.post(
            self.url, data=_line(query, doc).encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"}, timeout=self.timeout,
        )
        resp.raise_for_status()
        return _check_score(float(resp.text.strip()))


@dataclass
class QcReport:
    kept: list[GeneratedExample] = field(default_factory=list)
    banned: list[GeneratedExample] = field(default_factory=list)
    low_margin: list[GeneratedExample] = field(default_factory=list)


def apply_qc(
    examples: Iterable[GeneratedExample],
    collection: Collection,
    scorer: RelevanceScorer,
    qc: QcParams | None = None,
) -> QcReport:
    """Banned-word filter first; the margin check only runs on survivors."""
    qc = qc or QcParams()
    report = QcReport()
    for ex in examples:
        if not qc_banned(ex.query, qc):
            report.banned.append(ex)
        elif not qc_margin(scorer, ex.query, collection.get(ex.pos).text, collection.get(ex.neg).text, qc):
            report.low_margin.append(ex)
        else:
            report.kept.append(ex)
    return report
