"""Centroid-indexed late-interaction store with 1-bit residual compression.

Each document token is stored as the id of its nearest centroid plus one
sign bit per residual dimension (16 bytes at dim 128). Decompression adds a
single global scale ``alpha`` times the sign pattern back to the centroid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Collection
from .encoder import EmbeddingProvider, EncoderConfig, encode_doc

logger = logging.getLogger(__name__)

MAGIC = "CIRALKIT-PLAID"
FORMAT_VERSION = 1
MAX_TRAIN_TOKENS = 1_000_000

_FILES = ("meta.txt", "centroids.f32", "codes.u32", "residuals.bin", "doclens.u32", "docids.txt", "ivf.bin")


class IndexFormatError(ValueError):
    pass


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms == 0.0, 1.0, norms)


def kmeans_objective(samples: np.ndarray, centroids: np.ndarray) -> float:
    x = np.asarray(samples, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    assign = np.argmax(x @ c.T, axis=1)
    return float(np.sum((x - c[assign]) ** 2))


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # only duplicates remain; take the lowest unused index
            taken = set(chosen)
            nxt = next(i for i in range(n) if i not in taken)
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return chosen


def train_centroids(
    samples: np.ndarray,
    k: int,
    iters: int = 20,
    seed: int = 0,
    trace: list[float] | None = None,
) -> np.ndarray:
    """Spherical k-means: k-means++ seeding, then ``iters`` Lloyd rounds.

    Centroids are re-normalized after every update. A cluster that loses all
    its members is re-seeded at the point farthest from its current centroid.
    If ``trace`` is given, the objective after seeding and after each round
    is appended to it.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-d array")
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples ({n})")

    rng = np.random.default_rng(seed)
    c = _normalize_rows(x[_kmeans_pp(x, k, rng)].copy())
    if trace is not None:
        trace.append(kmeans_objective(x, c))

    for _ in range(iters):
        assign = np.argmax(x @ c.T, axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(c)
        np.add.at(sums, assign, x)
        for j in range(k):
            if counts[j] == 0:
                dist = np.sum((x - c[assign]) ** 2, axis=1)
                far = int(np.argmax(dist))
                c[j] = x[far]
                assign[far] = j
                continue
            norm = np.linalg.norm(sums[j])
            if norm > 0:
                c[j] = sums[j] / norm
        if trace is not None:
            trace.append(kmeans_objective(x, c))
    return _normalize_rows(c).astype(np.float32)


def default_num_centroids(n_tokens: int) -> int:
    return max(1, min(n_tokens, round(4 * math.sqrt(n_tokens))))


def assign_centroids(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid by dot product; ties go to the lowest id."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    return np.argmax(v @ np.asarray(centroids, dtype=np.float64).T, axis=1)


def pack_signs(residuals: np.ndarray) -> np.ndarray:
    """One bit per dimension, dimension ``8*b + j`` at bit ``j`` of byte ``b``."""
    return np.packbits(np.atleast_2d(residuals) >= 0, axis=1, bitorder="little")


def unpack_signs(packed: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`pack_signs` as a float32 array of +1/-1."""
    bits = np.unpackbits(np.atleast_2d(packed), axis=1, count=dim, bitorder="little")
    return bits.astype(np.float32) * 2.0 - 1.0


@dataclass(frozen=True)
class CompressedToken:
    centroid_id: int
    residual_bits: bytes
    doc: int = -1
    position: int = -1


def compress_token(v: np.ndarray, centroids: np.ndarray, alpha: float = 0.0) -> CompressedToken:
    # alpha is not needed to encode; accepted for symmetry with decompress
    codes, packed = compress(np.atleast_2d(v), centroids)
    return CompressedToken(int(codes[0]), packed[0].tobytes())


def decompress_token(ct: CompressedToken, centroids: np.ndarray, alpha: float) -> np.ndarray:
    packed = np.frombuffer(ct.residual_bits, dtype=np.uint8)[None, :]
    return decompress(np.array([ct.centroid_id]), packed, centroids, alpha)[0]


def compress(vectors: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized compression: (centroid ids, packed residual signs)."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    codes = assign_centroids(v, centroids)
    residuals = v - np.asarray(centroids, dtype=np.float64)[codes]
    return codes.astype(np.uint32), pack_signs(residuals)


def decompress(
    codes: np.ndarray, packed: np.ndarray, centroids: np.ndarray, alpha: float
) -> np.ndarray:
    """``centroid + alpha * signs``; the result is not re-normalized."""
    c = np.asarray(centroids, dtype=np.float32)
    signs = unpack_signs(packed, c.shape[1])
    return c[np.asarray(codes, dtype=np.int64)] + np.float32(alpha) * signs


def estimate_alpha(samples: np.ndarray, centroids: np.ndarray) -> float:
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    c = np.asarray(centroids, dtype=np.float64)
    residuals = x - c[assign_centroids(x, c)]
    return float(np.mean(np.abs(residuals)))


@dataclass(eq=False)
class PlaidIndex:
    cfg: EncoderConfig
    docids: list[str]
    centroids: np.ndarray  # (K, dim) float32
    alpha: float
    codes: np.ndarray  # (T,) uint32
    residuals: np.ndarray  # (T, ceil(dim/8)) uint8
    doclens: np.ndarray  # (N,) int64
    seed: int = 0
    extra: dict[str, str] = field(default_factory=dict)
    offsets: np.ndarray = field(init=False, repr=False)
    token_doc: np.ndarray = field(init=False, repr=False)
    ivf: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.doclens = np.asarray(self.doclens, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.doclens)]).astype(np.int64)
        self.token_doc = np.repeat(np.arange(len(self.doclens)), self.doclens)
        order = np.argsort(self.codes, kind="stable")
        bounds = np.searchsorted(self.codes[order], np.arange(self.num_centroids + 1))
        self.ivf = [order[bounds[j] : bounds[j + 1]] for j in range(self.num_centroids)]
        self._ordinals = {d: i for i, d in enumerate(self.docids)}

    @property
    def num_centroids(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def num_tokens(self) -> int:
        return int(self.codes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    def ordinal(self, docid: str) -> int:
        return self._ordinals[docid]

    def doc_tokens(self, ordinal: int) -> slice:
        return slice(int(self.offsets[ordinal]), int(self.offsets[ordinal + 1]))

    def decompress_doc(self, ordinal: int) -> np.ndarray:
        span = self.doc_tokens(ordinal)
        return decompress(self.codes[span], self.residuals[span], self.centroids, self.alpha)

    def token(self, t: int) -> CompressedToken:
        doc = int(self.token_doc[t])
        return CompressedToken(
            int(self.codes[t]), self.residuals[t].tobytes(), doc, t - int(self.offsets[doc])
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlaidIndex):
            return NotImplemented
        return (
            self.cfg == other.cfg
            and self.docids == other.docids
            and self.alpha == other.alpha
            and self.seed == other.seed
            and self.extra == other.extra
            and np.array_equal(self.centroids, other.centroids)
            and self.centroids.dtype == other.centroids.dtype
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.residuals, other.residuals)
            and np.array_equal(self.doclens, other.doclens)
        )


def encode_collection(
    collection: Collection, provider: EmbeddingProvider, cfg: EncoderConfig
) -> list[np.ndarray]:
    return [encode_doc(provider, doc.text, cfg) for doc in collection]


def build_plaid(
    collection: Collection,
    provider: EmbeddingProvider,
    cfg: EncoderConfig | None = None,
    k: int | None = None,
    seed: int = 0,
    iters: int = 20,
    centroids: np.ndarray | None = None,
    alpha: float | None = None,
    extra: dict[str, str] | None = None,
) -> PlaidIndex:
    """Encode, cluster, compress and invert a collection.

    ``centroids`` and ``alpha`` override the trained values; this is how the
    lossless configuration (tokens on centroids, zero scale) is built.
    """
    cfg = cfg or EncoderConfig()
    if len(collection) == 0:
        raise ValueError("cannot index an empty collection")
    mats = encode_collection(collection, provider, cfg)
    tokens = np.concatenate(mats, axis=0)
    doclens = np.array([len(m) for m in mats], dtype=np.int64)

    if centroids is None:
        rng = np.random.default_rng(seed)
        if len(tokens) > MAX_TRAIN_TOKENS:
            sample = tokens[np.sort(rng.choice(len(tokens), MAX_TRAIN_TOKENS, replace=False))]
        else:
            sample = tokens
        k = k or default_num_centroids(len(sample))
        logger.info("training %d centroids on %d tokens", k, len(sample))
        centroids = train_centroids(sample, k, iters=iters, seed=seed)
    else:
        centroids = np.asarray(centroids, dtype=np.float32)
        sample = tokens
    if alpha is None:
        alpha = estimate_alpha(sample, centroids)

    codes, residuals = compress(tokens, centroids)
    return PlaidIndex(
        cfg=cfg,
        docids=collection.docids,
        centroids=centroids,
        alpha=float(alpha),
        codes=codes,
        residuals=residuals,
        doclens=doclens,
        seed=seed,
        extra=dict(extra or {}),
    )


def _write_varint_lists(lists: Sequence[np.ndarray]) -> bytes:
    out = bytearray()

    def put(n: int) -> None:
        while True:
            byte = n & 0x7F
            n >>= 7
            if n:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                return

    for ids in lists:
        put(len(ids))
        prev = 0
        for t in ids.tolist():
            put(t - prev)
            prev = t
    return bytes(out)


def _read_varint_lists(data: bytes, n_lists: int) -> list[np.ndarray]:
    pos = 0

    def get() -> int:
        nonlocal pos
        shift = value = 0
        while True:
            if pos >= len(data):
                raise IndexFormatError("ivf.bin is truncated")
            byte = data[pos]
            pos += 1
            value |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return value
            shift += 7

    lists = []
    for _ in range(n_lists):
        count = get()
        ids = np.empty(count, dtype=np.int64)
        prev = 0
        for i in range(count):
            prev += get()
            ids[i] = prev
        lists.append(ids)
    if pos != len(data):
        raise IndexFormatError("ivf.bin has trailing bytes")
    return lists


def save_index(index: PlaidIndex, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": FORMAT_VERSION,
        "dim": index.dim,
        "k": index.num_centroids,
        "alpha": repr(index.alpha),
        "n_docs": len(index.docids),
        "n_tokens": index.num_tokens,
        "seed": index.seed,
        "query_len": index.cfg.query_len,
        "doc_maxlen": index.cfg.doc_maxlen,
        "mask_symbol": index.cfg.mask_symbol,
    }
    lines = [MAGIC] + [f"{k}={v}" for k, v in meta.items()]
    lines += [f"extra.{k}={v}" for k, v in sorted(index.extra.items())]
    (d / "meta.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (d / "centroids.f32").write_bytes(index.centroids.astype("<f4").tobytes())
    (d / "codes.u32").write_bytes(index.codes.astype("<u4").tobytes())
    (d / "residuals.bin").write_bytes(np.ascontiguousarray(index.residuals).tobytes())
    (d / "doclens.u32").write_bytes(index.doclens.astype("<u4").tobytes())
    (d / "docids.txt").write_text("".join(f"{x}\n" for x in index.docids), encoding="utf-8")
    (d / "ivf.bin").write_bytes(_write_varint_lists(index.ivf))


def _read_meta(path: Path) -> dict[str, str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MAGIC:
        raise IndexFormatError(f"{path}: bad magic (expected {MAGIC!r})")
    meta = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise IndexFormatError(f"{path}: malformed line {line!r}")
        meta[key] = value
    return meta


def load_index(directory: str | Path) -> PlaidIndex:
    d = Path(directory)
    for name in _FILES:
        if not (d / name).is_file():
            raise IndexFormatError(f"{d}: missing index file {name}")
    meta = _read_meta(d / "meta.txt")
    try:
        version = int(meta["version"])
        if version != FORMAT_VERSION:
            raise IndexFormatError(f"{d}: unsupported index version {version}")
        dim, k = int(meta["dim"]), int(meta["k"])
        n_docs, n_tokens = int(meta["n_docs"]), int(meta["n_tokens"])
        cfg = EncoderConfig(dim, int(meta["query_len"]), int(meta["doc_maxlen"]), meta["mask_symbol"])
        alpha, seed = float(meta["alpha"]), int(meta["seed"])
    except KeyError as exc:
        raise IndexFormatError(f"{d}: meta.txt lacks field {exc}") from exc

    def array(name: str, dtype: str, count: int) -> np.ndarray:
        raw = (d / name).read_bytes()
        arr = np.frombuffer(raw, dtype=dtype)
        if arr.size != count:
            raise IndexFormatError(f"{d / name}: expected {count} values, found {arr.size}")
        return arr

    centroids = array("centroids.f32", "<f4", k * dim).reshape(k, dim).astype(np.float32)
    codes = array("codes.u32", "<u4", n_tokens).astype(np.uint32)
    nbytes = (dim + 7) // 8
    residuals = array("residuals.bin", "u1", n_tokens * nbytes).reshape(n_tokens, nbytes).copy()
    doclens = array("doclens.u32", "<u4", n_docs).astype(np.int64)
    docids = (d / "docids.txt").read_text(encoding="utf-8").splitlines()
    if len(docids) != n_docs:
        raise IndexFormatError(f"{d}: docids.txt has {len(docids)} entries, expected {n_docs}")
    if int(doclens.sum()) != n_tokens:
        raise IndexFormatError(f"{d}: doclens do not sum to n_tokens")
    if n_tokens and int(codes.max()) >= k:
        raise IndexFormatError(f"{d}: centroid id out of range")

    extra = {key[6:]: v for key, v in meta.items() if key.startswith("extra.")}
    index = PlaidIndex(cfg, docids, centroids, alpha, codes, residuals, doclens, seed, extra)
    stored = _read_varint_lists((d / "ivf.bin").read_bytes(), k)
    if any(not np.array_equal(a, b) for a, b in zip(stored, index.ivf)):
        raise IndexFormatError(f"{d}: inverted lists disagree with centroid codes")
    return index
