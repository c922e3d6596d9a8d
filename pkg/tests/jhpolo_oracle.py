"""Brute-force reference for pair mining: direct BM25, DP substring, exhaustive matching."""

from __future__ import annotations

import math

from ciralkit.corpus import tokenize


def bm25_scores(texts: dict[str, str], query: list[str], k1: float = 0.9, b: float = 0.4) -> dict[str, float]:
    toks = {d: tokenize(t) for d, t in texts.items()}
    n = len(toks)
    avg = sum(len(t) for t in toks.values()) / n
    out = {}
    for d, t in toks.items():
        s = 0.0
        for term in query:
            tf = t.count(term)
            if tf == 0:
                continue
            df = sum(term in x for x in toks.values())
            idf = max(0.0, math.log((n - df + 0.5) / (df + 0.5) + 1))
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(t) / avg))
        if s > 0:
            out[d] = s
    return out


def lcs_dp(a: str, b: str) -> int:
    best = 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
                best = max(best, cur[j])
        prev = cur
    return best


def passes(q: str, c: str, ratio: float, p) -> bool:
    common = lcs_dp(q, c)
    return (
        ratio <= p.max_score_ratio
        and common <= p.max_lcs_frac * len(c)
        and len(c) - common >= p.min_non_lcs_chars
        and len(c) >= p.min_cand_chars
    )


def edges(texts: dict[str, str], p) -> dict[frozenset, float]:
    """Undirected surviving edges with the lower of the two ratios."""
    out: dict[frozenset, float] = {}
    for q, qt in texts.items():
        if len(qt) <= p.min_query_doc_chars:
            continue
        query = tokenize(qt)
        scores = bm25_scores(texts, query)
        ranked = sorted(scores.items(), key=lambda x: (-x[1], x[0]))[: p.top_k + 1]
        own = scores.get(q)
        if not own:
            continue
        for c, s in [r for r in ranked if r[0] != q][: p.top_k]:
            ratio = s / own
            if passes(qt, texts[c], ratio, p):
                key = frozenset((q, c))
                out[key] = min(out.get(key, math.inf), ratio)
    return out


def optimal_matchings(weighted: dict[frozenset, float]) -> tuple[int, float, list[frozenset]]:
    """All maximum-cardinality matchings with the least total ratio."""
    items = sorted(weighted.items(), key=lambda x: sorted(x[0]))
    best: list = [0, math.inf, []]

    def rec(i: int, used: set, chosen: list, total: float) -> None:
        if i == len(items):
            size = len(chosen)
            if size > best[0] or (size == best[0] and total < best[1] - 1e-12):
                best[:] = [size, total, [frozenset(chosen)]]
            elif size == best[0] and abs(total - best[1]) <= 1e-12:
                best[2].append(frozenset(chosen))
            return
        # remaining edges cannot lift the cardinality enough
        if len(chosen) + (len(items) - i) < best[0]:
            return
        e, w = items[i]
        if not (e & used):
            rec(i + 1, used | e, chosen + [e], total + w)
        rec(i + 1, used, chosen, total)

    rec(0, set(), [], 0.0)
    return best[0], best[1], best[2]
