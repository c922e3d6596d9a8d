"""BM25 inverted index with RM3 pseudo-relevance feedback."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Collection, tokenize

SPARSE_FORMAT = "ciralkit-sparse/1"


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4


@dataclass(frozen=True)
class RM3Params:
    fb_docs: int = 10
    fb_terms: int = 10
    orig_weight: float = 0.5


@dataclass
class SparseIndex:
    docids: list[str]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    # forward term counts, needed for relevance-model estimation
    doc_terms: list[dict[str, int]]
    params: BM25Params = field(default_factory=BM25Params)
    avg_doc_len: float = field(init=False)
    _ordinals: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._ordinals = {d: i for i, d in enumerate(self.docids)}
        n = len(self.doc_lengths)
        self.avg_doc_len = sum(self.doc_lengths) / n if n else 0.0

    def ordinal(self, docid: str) -> int:
        return self._ordinals[docid]

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, ordinal: int) -> int:
        return self.doc_terms[ordinal].get(term, 0)

    def idf(self, term: str) -> float:
        n, df = self.doc_count, self.df(term)
        return max(0.0, math.log((n - df + 0.5) / (df + 0.5) + 1.0))

    def term_score(self, term: str, tf: int, ordinal: int) -> float:
        k1, b = self.params.k1, self.params.b
        norm = k1 * (1.0 - b + b * self.doc_lengths[ordinal] / self.avg_doc_len)
        return self.idf(term) * tf * (k1 + 1.0) / (tf + norm)

    def score_doc(self, query: Sequence[str], ordinal: int) -> float:
        """BM25 score of one document, without going through the postings."""
        total = 0.0
        for term, qtf in sorted(Counter(query).items()):
            tf = self.tf(term, ordinal)
            if tf:
                total += qtf * self.term_score(term, tf, ordinal)
        return total

    def save(self, path: str | Path) -> None:
        payload = {
            "format": SPARSE_FORMAT,
            "k1": self.params.k1,
            "b": self.params.b,
            "docids": self.docids,
            "doc_terms": [sorted(d.items()) for d in self.doc_terms],
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, separators=(",", ":")), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "SparseIndex":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != SPARSE_FORMAT:
            raise ValueError(f"{path}: not a {SPARSE_FORMAT} file")
        return _from_term_counts(
            payload["docids"],
            [dict((t, int(c)) for t, c in d) for d in payload["doc_terms"]],
            BM25Params(payload["k1"], payload["b"]),
        )


def _from_term_counts(
    docids: list[str], doc_terms: list[dict[str, int]], params: BM25Params
) -> SparseIndex:
    postings: dict[str, list[tuple[int, int]]] = {}
    for ordinal, counts in enumerate(doc_terms):
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
    lengths = [sum(c.values()) for c in doc_terms]
    return SparseIndex(docids, postings, lengths, doc_terms, params)


def build_sparse(collection: Collection, params: BM25Params | None = None) -> SparseIndex:
    doc_terms = [dict(Counter(tokenize(doc.text))) for doc in collection]
    return _from_term_counts(collection.docids, doc_terms, params or BM25Params())


def _rank(scores: dict[int, float], docids: list[str], k: int) -> list[tuple[str, float]]:
    ranked = sorted(((docids[o], s) for o, s in scores.items()), key=lambda x: (-x[1], x[0]))
    return ranked[:k]


def weighted_search(
    index: SparseIndex, wq: Iterable[tuple[str, float]], k: int
) -> list[tuple[str, float]]:
    """Score documents as the weighted sum of per-term BM25 contributions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[int, float] = {}
    for term, weight in wq:
        if weight <= 0:
            continue
        for ordinal, tf in index.postings.get(term, ()):
            scores[ordinal] = scores.get(ordinal, 0.0) + weight * index.term_score(term, tf, ordinal)
    return _rank(scores, index.docids, k)


def bm25_search(index: SparseIndex, query: Sequence[str], k: int) -> list[tuple[str, float]]:
    # repeated query terms count once per occurrence
    return weighted_search(index, sorted(Counter(query).items()), k)


def _uniform(query: Sequence[str]) -> dict[str, float]:
    terms = sorted(set(query))
    return {t: 1.0 / len(terms) for t in terms}


def rm3_expand(
    index: SparseIndex,
    query: Sequence[str],
    fb_docs: int = 10,
    fb_terms: int = 10,
    orig_weight: float = 0.5,
) -> list[tuple[str, float]]:
    """Interpolate the query with a relevance model from the top feedback docs.

    The relevance model weights each feedback document by its share of the
    summed BM25 scores and each term by its maximum-likelihood probability in
    that document; it is truncated to the ``fb_terms`` heaviest terms and
    renormalized before mixing.
    """
    if fb_docs < 1 or fb_terms < 1:
        raise ValueError("fb_docs and fb_terms must be >= 1")
    if not 0.0 <= orig_weight <= 1.0:
        raise ValueError("orig_weight must lie in [0, 1]")
    if not query:
        return []
    original = _uniform(query)
    feedback = bm25_search(index, query, fb_docs)
    total_score = sum(s for _, s in feedback)
    if not feedback or total_score <= 0 or orig_weight == 1.0:
        return sorted(original.items())

    relevance: dict[str, float] = {}
    for docid, score in feedback:
        ordinal = index.ordinal(docid)
        length = index.doc_lengths[ordinal]
        doc_weight = score / total_score
        for term, tf in index.doc_terms[ordinal].items():
            relevance[term] = relevance.get(term, 0.0) + doc_weight * tf / length

    top = sorted(relevance.items(), key=lambda x: (-x[1], x[0]))[:fb_terms]
    mass = sum(w for _, w in top)
    mixed: dict[str, float] = {t: orig_weight * w for t, w in original.items()}
    for term, w in top:
        mixed[term] = mixed.get(term, 0.0) + (1.0 - orig_weight) * w / mass
    return sorted((t, w) for t, w in mixed.items() if w > 0)


def rm3_search(
    index: SparseIndex, query: Sequence[str], k: int, params: RM3Params | None = None
) -> list[tuple[str, float]]:
    p = params or RM3Params()
    wq = rm3_expand(index, query, p.fb_docs, p.fb_terms, p.orig_weight)
    return weighted_search(index, wq, k)
