"""Select document pairs that overlap in topic but are not near-duplicates."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from ..corpus import Collection, Document, tokenize
from ..sparse import SparseIndex, bm25_search
from .lcs import LcsMatcher

logger = logging.getLogger(__name__)

SCORE_RATIO = "score ratio"
LCS_FRACTION = "lcs fraction"
NON_LCS_CHARS = "non-lcs chars"
MIN_LENGTH = "min length"


@dataclass(frozen=True)
class MiningParams:
    min_query_doc_chars: int = 150
    top_k: int = 20
    max_score_ratio: float = 0.65
    max_lcs_frac: float = 0.60
    min_non_lcs_chars: int = 20
    min_cand_chars: int = 150
    matching: str = "max"  # "max" or "greedy"

    def __post_init__(self) -> None:
        if min(self.min_query_doc_chars, self.top_k, self.min_non_lcs_chars, self.min_cand_chars) <= 0:
            raise ValueError("mining thresholds must be positive")
        if not (0 < self.max_score_ratio <= 1 and 0 < self.max_lcs_frac <= 1):
            raise ValueError("max_score_ratio and max_lcs_frac must lie in (0, 1]")
        if self.matching not in ("max", "greedy"):
            raise ValueError(f"unknown matching strategy {self.matching!r}")


@dataclass(frozen=True)
class MinedPair:
    doc_a: str
    doc_b: str
    bm25_ratio: float

    @property
    def pair_id(self) -> str:
        return f"{self.doc_a}::{self.doc_b}"


def filter_candidate(
    query_doc: Document | str,
    cand: Document | str,
    query_score: float,
    cand_score: float,
    p: MiningParams,
    matcher: LcsMatcher | None = None,
) -> tuple[bool, str | None]:
    """Apply the four rejection rules in order; return (accepted, first failing rule)."""
    if query_score <= 0:
        raise ValueError("query_score must be positive")
    q_text = query_doc.text if isinstance(query_doc, Document) else query_doc
    c_text = cand.text if isinstance(cand, Document) else cand
    if cand_score / query_score > p.max_score_ratio:
        return False, SCORE_RATIO
    common = (matcher or LcsMatcher(q_text)).longest_in(c_text)
    if common > p.max_lcs_frac * len(c_text):
        return False, LCS_FRACTION
    if len(c_text) - common < p.min_non_lcs_chars:
        return False, NON_LCS_CHARS
    if len(c_text) < p.min_cand_chars:
        return False, MIN_LENGTH
    return True, None


def query_edges(index: SparseIndex, collection: Collection, ordinal: int, p: MiningParams) -> list[MinedPair]:
    """Surviving (query document, candidate) edges for one query document."""
    doc = collection[ordinal]
    if len(doc.text) <= p.min_query_doc_chars:
        return []
    query = tokenize(doc.text)
    if not query:
        return []
    hits = bm25_search(index, query, p.top_k + 1)
    own = dict(hits).get(doc.docid)
    query_score = own if own is not None else index.score_doc(query, ordinal)
    if query_score <= 0:
        return []
    matcher = LcsMatcher(doc.text)
    edges = []
    for docid, score in [h for h in hits if h[0] != doc.docid][: p.top_k]:
        ok, _ = filter_candidate(doc, collection.get(docid), query_score, score, p, matcher)
        if ok:
            edges.append(MinedPair(doc.docid, docid, score / query_score))
    return edges


_WORKER: tuple[SparseIndex, Collection, MiningParams] | None = None


def _init_worker(index: SparseIndex, collection: Collection, p: MiningParams) -> None:
    global _WORKER
    _WORKER = (index, collection, p)


def _edges_for_range(bounds: tuple[int, int]) -> list[MinedPair]:
    assert _WORKER is not None
    index, collection, p = _WORKER
    return [e for i in range(*bounds) for e in query_edges(index, collection, i, p)]


def candidate_edges(
    index: SparseIndex, collection: Collection, p: MiningParams, workers: int = 1
) -> list[MinedPair]:
    n = len(collection)
    if workers <= 1 or n < 2 * workers:
        return [e for i in range(n) for e in query_edges(index, collection, i, p)]
    step = -(-n // (workers * 4))
    chunks = [(lo, min(n, lo + step)) for lo in range(0, n, step)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(index, collection, p)) as ex:
        # map preserves chunk order, so the merge is deterministic
        return [e for part in ex.map(_edges_for_range, chunks) for e in part]


def _edge_key(e: MinedPair) -> tuple[float, str, str]:
    return (e.bm25_ratio, e.doc_a, e.doc_b)


def _undirected(edges: Iterable[MinedPair]) -> list[MinedPair]:
    """One edge per document pair, keeping the lowest-ratio orientation."""
    best: dict[frozenset[str], MinedPair] = {}
    for e in sorted(edges, key=_edge_key):
        best.setdefault(frozenset((e.doc_a, e.doc_b)), e)
    return sorted(best.values(), key=_edge_key)


def greedy_matching(edges: Iterable[MinedPair]) -> list[MinedPair]:
    used: set[str] = set()
    out = []
    for e in _undirected(edges):
        if e.doc_a not in used and e.doc_b not in used:
            used.update((e.doc_a, e.doc_b))
            out.append(e)
    return out


def max_matching(edges: Iterable[MinedPair]) -> list[MinedPair]:
    """Maximum-cardinality matching; among those, the smallest total score ratio."""
    unique = _undirected(edges)
    g = nx.Graph()
    for e in unique:
        g.add_edge(e.doc_a, e.doc_b, weight=2.0 - e.bm25_ratio, pair=e)
    matched = nx.max_weight_matching(g, maxcardinality=True, weight="weight")
    return sorted((g.edges[u, v]["pair"] for u, v in matched), key=_edge_key)


def select_pairs(edges: Sequence[MinedPair], strategy: str = "max") -> list[MinedPair]:
    greedy = greedy_matching(edges)
    if strategy == "greedy":
        logger.info("greedy matching: %d pairs from %d edges", len(greedy), len(edges))
        return greedy
    best = max_matching(edges)
    logger.info(
        "maximum matching: %d pairs from %d edges (greedy would give %d)",
        len(best), len(edges), len(greedy),
    )
    return best


def mine_pairs(
    index: SparseIndex, collection: Collection, p: MiningParams | None = None, workers: int = 1
) -> list[MinedPair]:
    p = p or MiningParams()
    return select_pairs(candidate_edges(index, collection, p, workers), p.matching)


def write_pairs(pairs: Iterable[MinedPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(json.dumps(asdict(pair), ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[MinedPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pairs.append(MinedPair(rec["doc_a"], rec["doc_b"], float(rec["bm25_ratio"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed pair ({exc})") from exc
    return pairs
