"""Seeded synthetic corpora for tests, benchmarks and CLI smoke runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LANGS, Collection, Document
from .encoder import MASK, TableProvider, as_unit


@dataclass
class SyntheticCorpus:
    collection: Collection
    queries: list[tuple[str, str]]
    qrels: dict[tuple[str, str], int]
    embeddings: dict[str, np.ndarray]
    dim: int
    seed: int

    def provider(self) -> TableProvider:
        return TableProvider(self.embeddings, self.dim, self.seed)


def _word(topic: int, j: int) -> str:
    return f"t{topic}w{j}"


def make_corpus(
    n_docs: int = 200,
    n_topics: int = 20,
    words_per_topic: int = 40,
    n_background: int = 60,
    doc_len: tuple[int, int] = (30, 80),
    n_queries: int = 20,
    query_len: tuple[int, int] = (3, 6),
    n_clusters: int = 64,
    noise: float = 0.35,
    dim: int = 128,
    seed: int = 0,
) -> SyntheticCorpus:
    """Topic-structured documents over a vocabulary with clustered embeddings.

    Every word is a noisy copy of one of ``n_clusters`` random directions, and
    each topic draws its words from its own few clusters, so the token space
    has real cluster structure for k-means to recover. Each query is a handful of distinct topic words
    drawn from one document's tokens; that document is graded 2 and the rest of its
    topic 1.
    """
    rng = np.random.default_rng(seed)
    topic_vocab = [[_word(t, j) for j in range(words_per_topic)] for t in range(n_topics)]
    background = [f"bg{j}" for j in range(n_background)]
    vocab = [w for ws in topic_vocab for w in ws] + background

    # words span the first dim-1 axes; the mask token owns the last one, so
    # query padding adds the same amount to every document's score
    span = dim - 1
    centers = np.zeros((n_clusters, dim))
    centers[:, :span] = rng.standard_normal((n_clusters, span))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    # each topic owns a block of clusters; background words use the remainder
    per_topic = max(1, n_clusters // (n_topics + 1))
    spare = list(range(n_topics * per_topic, n_clusters)) or list(range(n_clusters))
    owner = {w: t * per_topic + int(rng.integers(per_topic)) for t, ws in enumerate(topic_vocab) for w in ws}
    owner.update({w: spare[int(rng.integers(len(spare)))] for w in background})
    embeddings: dict[str, np.ndarray] = {}
    for w in vocab:
        v = centers[owner[w] % n_clusters].copy()
        v[:span] += noise * rng.standard_normal(span) / np.sqrt(span)
        embeddings[w] = as_unit(v)
    mask = np.zeros(dim)
    mask[-1] = 1.0
    embeddings[MASK] = as_unit(mask)

    zipf = 1.0 / np.arange(1, words_per_topic + 1)
    zipf /= zipf.sum()
    docs, topics = [], []
    for i in range(n_docs):
        t = int(rng.integers(n_topics))
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        words = [
            background[rng.integers(n_background)]
            if rng.random() < 0.2
            else topic_vocab[t][rng.choice(words_per_topic, p=zipf)]
            for _ in range(n)
        ]
        docs.append(Document(f"d{i:04d}", " ".join(words), LANGS[i % len(LANGS)]))
        topics.append(t)

    queries: list[tuple[str, str]] = []
    qrels: dict[tuple[str, str], int] = {}
    sources = rng.choice(n_docs, size=min(n_queries, n_docs), replace=False)
    for qi, src in enumerate(sources):
        qid = f"q{qi:03d}"
        # sample by token frequency so queries favour the topic's head words
        tokens = [w for w in docs[src].text.split() if not w.startswith("bg")]
        m = int(rng.integers(query_len[0], query_len[1] + 1))
        words = list(dict.fromkeys(tokens[j] for j in rng.permutation(len(tokens))))[:m]
        queries.append((qid, " ".join(words)))
        for j, t in enumerate(topics):
            if t == topics[src]:
                qrels[(qid, docs[j].docid)] = 2 if j == src else 1
        # a few judged non-relevant documents
        for j in rng.choice(n_docs, size=min(5, n_docs), replace=False):
            qrels.setdefault((qid, docs[j].docid), 0)

    return SyntheticCorpus(Collection(tuple(docs)), queries, qrels, embeddings, dim, seed)
