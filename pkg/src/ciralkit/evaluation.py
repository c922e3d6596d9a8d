"""TREC run/qrels files and the nDCG@k, R@k and Judged@k measures.

Unjudged documents count as non-relevant. Means are taken over the topics
in the qrels; a topic missing from the run scores 0, and run topics absent
from the qrels are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

Qrels = dict[tuple[str, str], int]


class TrecFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunEntry:
    docid: str
    score: float
    rank: int
    tag: str = "ciralkit"


class RunFile(dict):
    """``topic -> [RunEntry, ...]`` in rank order."""

    def rankings(self) -> dict[str, list[str]]:
        return {topic: [e.docid for e in entries] for topic, entries in self.items()}

    def validate(self) -> None:
        for topic, entries in self.items():
            seen: set[str] = set()
            for i, e in enumerate(entries):
                if e.rank != i + 1:
                    raise TrecFormatError(f"topic {topic}: ranks are not 1..n (found {e.rank} at position {i + 1})")
                if i and e.score > entries[i - 1].score:
                    raise TrecFormatError(f"topic {topic}: scores increase at rank {e.rank}")
                if e.docid in seen:
                    raise TrecFormatError(f"topic {topic}: duplicate docid {e.docid}")
                seen.add(e.docid)

    @classmethod
    def from_results(cls, results: Mapping[str, Sequence[tuple[str, float]]], tag: str = "ciralkit") -> "RunFile":
        run = cls()
        for topic, hits in results.items():
            run[topic] = [RunEntry(d, float(s), i + 1, tag) for i, (d, s) in enumerate(hits)]
        return run


@dataclass(frozen=True)
class MetricResult:
    per_topic: dict[str, float]
    mean: float


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise TrecFormatError(f"{path}: line {lineno}: expected 'topic iter docid grade'")
            topic, _, docid, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError as exc:
                raise TrecFormatError(f"{path}: line {lineno}: grade {grade_text!r} is not an integer") from exc
            if grade < 0:
                raise TrecFormatError(f"{path}: line {lineno}: negative grade {grade}")
            if (topic, docid) in qrels:
                raise TrecFormatError(f"{path}: line {lineno}: duplicate judgment for {topic} {docid}")
            qrels[(topic, docid)] = grade
    return qrels


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (topic, docid), grade in sorted(qrels.items()):
            fh.write(f"{topic} 0 {docid} {grade}\n")


def read_run(path: str | Path) -> RunFile:
    run = RunFile()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise TrecFormatError(f"{path}: line {lineno}: expected 'topic Q0 docid rank score tag'")
            topic, _, docid, rank, score, tag = parts
            try:
                entry = RunEntry(docid, float(score), int(rank), tag)
            except ValueError as exc:
                raise TrecFormatError(f"{path}: line {lineno}: {exc}") from exc
            run.setdefault(topic, []).append(entry)
    for entries in run.values():
        entries.sort(key=lambda e: e.rank)
    run.validate()
    return run


def write_run(run: RunFile, path: str | Path) -> None:
    run.validate()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for topic in sorted(run):
            for e in run[topic]:
                fh.write(f"{topic} Q0 {e.docid} {e.rank} {e.score!r} {e.tag}\n")


def _by_topic(qrels: Qrels) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for (topic, docid), grade in qrels.items():
        out.setdefault(topic, {})[docid] = grade
    return out


def _rankings(run: RunFile | Mapping[str, Sequence[str]]) -> Mapping[str, Sequence[str]]:
    return run.rankings() if isinstance(run, RunFile) else run


def _aggregate(per_topic: dict[str, float]) -> MetricResult:
    mean = sum(per_topic.values()) / len(per_topic) if per_topic else 0.0
    return MetricResult(per_topic, mean)


def ndcg_at(
    run: RunFile | Mapping[str, Sequence[str]], qrels: Qrels, cutoff: int = 20, gain: str = "linear"
) -> MetricResult:
    if gain == "linear":
        g = float
    elif gain == "exponential":
        def g(grade: int) -> float:
            return 2.0**grade - 1.0
    else:
        raise ValueError(f"unknown gain {gain!r}")
    rankings = _rankings(run)
    per_topic = {}
    for topic, judged in _by_topic(qrels).items():
        ideal = sorted(judged.values(), reverse=True)[:cutoff]
        idcg = sum(g(x) / math.log2(i + 2) for i, x in enumerate(ideal))
        if idcg <= 0:
            per_topic[topic] = 0.0
            continue
        ranked = rankings.get(topic, ())[:cutoff]
        dcg = sum(g(judged.get(d, 0)) / math.log2(i + 2) for i, d in enumerate(ranked))
        per_topic[topic] = dcg / idcg
    return _aggregate(per_topic)


def recall_at(run: RunFile | Mapping[str, Sequence[str]], qrels: Qrels, cutoff: int = 100) -> MetricResult:
    rankings = _rankings(run)
    per_topic = {}
    for topic, judged in _by_topic(qrels).items():
        relevant = {d for d, grade in judged.items() if grade > 0}
        if not relevant:
            per_topic[topic] = 0.0
            continue
        found = relevant.intersection(rankings.get(topic, ())[:cutoff])
        per_topic[topic] = len(found) / len(relevant)
    return _aggregate(per_topic)


def judged_at(run: RunFile | Mapping[str, Sequence[str]], qrels: Qrels, cutoff: int = 20) -> MetricResult:
    """Share of the top ``cutoff`` slots holding a judged document (any grade)."""
    rankings = _rankings(run)
    per_topic = {}
    for topic, judged in _by_topic(qrels).items():
        top = rankings.get(topic, ())[:cutoff]
        per_topic[topic] = sum(1 for d in top if d in judged) / cutoff
    return _aggregate(per_topic)


METRICS = {"ndcg": ndcg_at, "recall": recall_at, "r": recall_at, "judged": judged_at}


def parse_metric(name: str) -> tuple[str, int]:
    """``"ndcg@20"`` -> ("ndcg", 20)."""
    base, _, cut = name.lower().partition("@")
    if base not in METRICS or not cut.isdigit() or int(cut) < 1:
        raise ValueError(f"unknown metric {name!r}; expected ndcg@k, recall@k (r@k) or judged@k")
    return ("recall" if base == "r" else base), int(cut)


def evaluate(
    run: RunFile | Mapping[str, Sequence[str]], qrels: Qrels, metrics: Iterable[str], gain: str = "linear"
) -> dict[str, MetricResult]:
    out = {}
    for name in metrics:
        base, cutoff = parse_metric(name)
        if base == "ndcg":
            out[name] = ndcg_at(run, qrels, cutoff, gain)
        else:
            out[name] = METRICS[base](run, qrels, cutoff)
    return out
