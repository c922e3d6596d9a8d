"""Token-matrix encoders backed by pluggable per-term embedding providers.

Token matrices are float32 ``(n_tokens, dim)`` arrays with unit-norm rows, so
MaxSim reduces to dot products. The default provider hashes each term to a
pseudo-random direction; precomputed embeddings from a real model can be
loaded from a whitespace-separated text table.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import tokenize

MASK = "[MASK]"


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 128
    query_len: int = 32
    doc_maxlen: int = 180
    mask_symbol: str = MASK

    def __post_init__(self) -> None:
        if min(self.dim, self.query_len, self.doc_maxlen) <= 0:
            raise ValueError("dim, query_len and doc_maxlen must be positive")
        if not self.mask_symbol or any(c.isspace() for c in self.mask_symbol):
            raise ValueError("mask_symbol must be a non-empty token without whitespace")


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, term: str) -> np.ndarray:
        """Unit-norm float32 vector of length ``dim``."""
        ...


def as_unit(v: np.ndarray) -> np.ndarray:
    """Cast to float32 and normalize, leaving already-unit vectors untouched.

    Skipping the division for vectors within float32 precision of unit norm
    keeps stored vectors bit-identical across providers.
    """
    v64 = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v64))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    if abs(norm - 1.0) <= 1e-7 and np.asarray(v).dtype == np.float32:
        return np.asarray(v, dtype=np.float32)
    return (v64 / norm).astype(np.float32)


def hash_embed(term: str, dim: int = 128, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random unit vector for ``term``."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    digest = hashlib.blake2b(f"{seed}\x1f{term}".encode("utf-8"), digest_size=16).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return as_unit(rng.standard_normal(dim))


class HashProvider:
    def __init__(self, dim: int = 128, seed: int = 0) -> None:
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, term: str) -> np.ndarray:
        vec = self._cache.get(term)
        if vec is None:
            vec = self._cache[term] = hash_embed(term, self.dim, self.seed)
        return vec


class TableProvider:
    """Stored vectors with a hash fallback for unknown terms."""

    def __init__(self, table: dict[str, np.ndarray], dim: int, seed: int = 0) -> None:
        self.dim = dim
        self.seed = seed
        self._fallback = HashProvider(dim, seed)
        self._table: dict[str, np.ndarray] = {}
        for term, vec in table.items():
            vec = np.asarray(vec)
            if vec.shape != (dim,):
                raise ValueError(f"vector for {term!r} has shape {vec.shape}, expected ({dim},)")
            self._table[term] = as_unit(vec)

    def __contains__(self, term: str) -> bool:
        return term in self._table

    def __len__(self) -> int:
        return len(self._table)

    def embed(self, term: str) -> np.ndarray:
        vec = self._table.get(term)
        return vec if vec is not None else self._fallback.embed(term)


def load_embedding_table(path: str | Path, seed: int = 0) -> TableProvider:
    """Read ``term v1 ... vd`` lines; all rows must share one dimension."""
    table: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            term, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim or dim == 0:
                raise ValueError(
                    f"{path}: line {lineno}: {term!r} has {len(values)} values, expected {dim}"
                )
            try:
                vec = np.array([float(x) for x in values], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            # float32 text written with repr() round-trips exactly
            as32 = vec.astype(np.float32)
            table[term] = as32 if np.array_equal(as32.astype(np.float64), vec) else vec
    if dim is None:
        raise ValueError(f"{path}: empty embedding table")
    return TableProvider(table, dim, seed)


def write_embedding_table(table: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for term, vec in table.items():
            fh.write(term + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def _rows(provider: EmbeddingProvider, terms: list[str], dim: int) -> np.ndarray:
    if provider.dim != dim:
        raise ValueError(f"provider dim {provider.dim} does not match encoder dim {dim}")
    mat = np.empty((len(terms), dim), dtype=np.float32)
    for i, term in enumerate(terms):
        mat[i] = provider.embed(term)
    return mat


def query_terms(text: str, cfg: EncoderConfig) -> list[str]:
    terms = tokenize(text)[: cfg.query_len]
    return terms + [cfg.mask_symbol] * (cfg.query_len - len(terms))


def doc_terms(text: str, cfg: EncoderConfig) -> list[str]:
    return tokenize(text)[: cfg.doc_maxlen] or [cfg.mask_symbol]


def encode_query(provider: EmbeddingProvider, text: str, cfg: EncoderConfig) -> np.ndarray:
    """Exactly ``cfg.query_len`` rows: token embeddings, then mask padding."""
    return _rows(provider, query_terms(text, cfg), cfg.dim)


def encode_doc(provider: EmbeddingProvider, text: str, cfg: EncoderConfig) -> np.ndarray:
    return _rows(provider, doc_terms(text, cfg), cfg.dim)
