"""MaxSim scoring: exhaustive search and centroid-pruned compressed search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Collection
from .encoder import EmbeddingProvider, EncoderConfig, encode_query
from .plaid import PlaidIndex, encode_collection


@dataclass(frozen=True)
class SearchParams:
    k: int = 10
    n_probe: int = 4
    n_candidates: int | None = None  # None -> max(4k, 100)

    def __post_init__(self) -> None:
        if self.k < 1 or self.n_probe < 1:
            raise ValueError("k and n_probe must be >= 1")
        if self.n_candidates is not None and self.n_candidates < self.k:
            raise ValueError("n_candidates must be >= k")

    @property
    def candidates(self) -> int:
        return self.n_candidates if self.n_candidates is not None else max(4 * self.k, 100)


def maxsim(Q: np.ndarray, D: np.ndarray) -> float:
    """Sum over query rows of the best dot product against any document row."""
    q = np.asarray(Q, dtype=np.float64)
    d = np.asarray(D, dtype=np.float64)
    if q.shape[1] != d.shape[1]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {d.shape[1]}")
    return float(np.max(q @ d.T, axis=1).sum())


def rank(scored: list[tuple[str, float]], k: int) -> list[tuple[str, float]]:
    return sorted(scored, key=lambda x: (-x[1], x[0]))[:k]


class ExactSearcher:
    """Brute-force MaxSim over uncompressed document matrices."""

    def __init__(self, collection: Collection, provider: EmbeddingProvider, cfg: EncoderConfig) -> None:
        self.collection = collection
        self.provider = provider
        self.cfg = cfg
        self.matrices = encode_collection(collection, provider, cfg)

    def search(self, query_text: str, k: int) -> list[tuple[str, float]]:
        Q = encode_query(self.provider, query_text, self.cfg)
        scored = [(doc.docid, maxsim(Q, D)) for doc, D in zip(self.collection, self.matrices)]
        return rank(scored, k)


def search_exact(
    collection: Collection,
    provider: EmbeddingProvider,
    cfg: EncoderConfig,
    query_text: str,
    k: int,
) -> list[tuple[str, float]]:
    return ExactSearcher(collection, provider, cfg).search(query_text, k)


def search_decompressed(index: PlaidIndex, Q: np.ndarray, k: int) -> list[tuple[str, float]]:
    """MaxSim against every decompressed document; the oracle for exhaustive probing."""
    scored = [(docid, maxsim(Q, index.decompress_doc(i))) for i, docid in enumerate(index.docids)]
    return rank(scored, k)


def candidate_scores(index: PlaidIndex, Q: np.ndarray, n_probe: int) -> dict[int, float]:
    """Centroid-only approximate scores for every document reached by a probe."""
    qc = np.asarray(Q, dtype=np.float64) @ index.centroids.astype(np.float64).T
    n_probe = min(n_probe, index.num_centroids)
    probed = np.unique(np.argsort(-qc, axis=1, kind="stable")[:, :n_probe])
    lists = [index.ivf[c] for c in probed if len(index.ivf[c])]
    if not lists:
        return {}
    tokens = np.sort(np.concatenate(lists))
    docs = index.token_doc[tokens]
    sims = qc[:, index.codes[tokens]]
    # tokens are sorted, so each document's tokens are contiguous
    uniq, starts = np.unique(docs, return_index=True)
    per_doc = np.maximum.reduceat(sims, starts, axis=1).sum(axis=0)
    return dict(zip(uniq.tolist(), per_doc.tolist()))


def search_plaid(
    index: PlaidIndex,
    provider: EmbeddingProvider,
    query_text: str,
    params: SearchParams | None = None,
) -> list[tuple[str, float]]:
    """Probe centroids, prune by centroid scores, rerank on decompressed tokens."""
    params = params or SearchParams()
    if provider.dim != index.dim:
        raise ValueError(f"provider dim {provider.dim} does not match index dim {index.dim}")
    Q = encode_query(provider, query_text, index.cfg)
    approx = candidate_scores(index, Q, params.n_probe)
    survivors = rank([(index.docids[o], s) for o, s in approx.items()], params.candidates)
    scored = [(docid, maxsim(Q, index.decompress_doc(index.ordinal(docid)))) for docid, _ in survivors]
    return rank(scored, params.k)


def recall_against(reference: list[tuple[str, float]], candidate: list[tuple[str, float]]) -> float:
    """Share of the reference ranking's documents that the candidate ranking also returns."""
    if not reference:
        return 1.0
    want = {d for d, _ in reference}
    return len(want & {d for d, _ in candidate}) / len(want)
